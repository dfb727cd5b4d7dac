#!/usr/bin/env python3
"""Regenerates data/toy: 60 fluent and 60 disfluent templated picture descriptions."""

import csv
import pathlib
import random

FLUENT = [
    "A young boy is standing on a wobbly stool and reaching into the cookie jar.",
    "The stool is tipping over, so he is about to fall.",
    "His sister stands beside him with her hand raised, asking for a cookie.",
    "Their mother is drying a plate at the kitchen sink.",
    "Water is overflowing from the sink and spilling onto the floor.",
    "She seems distracted and has not noticed the puddle at her feet.",
    "Through the open window you can see a garden with a curved path.",
    "The curtains are tied back and the afternoon looks calm outside.",
    "Two cups and a dish are resting on the counter next to her.",
    "The girl is holding a finger to her lips so their mother will not hear.",
    "The cupboard door is open above the counter.",
    "Everything in the kitchen suggests a busy household on an ordinary day.",
    "The boy has already taken one cookie and is passing it to his sister.",
    "Because the faucet is still running, the water keeps rising.",
    "The mother is wearing an apron while she works at the sink.",
]

DISFLUENT = [
    "um the boy is uh the boy is on the thing",
    "he is uh falling I think",
    "and the the girl is uh there",
    "the lady is um washing the washing the stuff",
    "there is water uh water on the on the floor",
    "um I don't know what that is",
    "the uh the jar the cookie thing",
    "and um uh she is um doing something",
    "the window is uh is there you know",
    "uh the little one wants the the thing",
    "um it's it's spilling I guess",
    "and uh that's uh that's all I see",
    "the mother she uh she is not um looking",
    "the stool uh the chair thing is going over",
]

CHAT_HEADER = "@Begin\n@Languages:\teng\n@Participants:\tPAR Participant, INV Investigator\n*INV:\ttell me what you see .\n"


def chat_line(sentence: str) -> str:
    words = []
    for w in sentence.split():
        words.append("&-" + w if w in ("um", "uh") else w)
    return "*PAR:\t" + " ".join(words) + " ."


def main() -> None:
    rng = random.Random(20240611)
    root = pathlib.Path(__file__).resolve().parent.parent / "data" / "toy"
    (root / "transcripts").mkdir(parents=True, exist_ok=True)
    rows = []
    splits = ["train"] * 30 + ["validation"] * 12 + ["test"] * 18
    for label, pool in (("control", FLUENT), ("case", DISFLUENT)):
        for i, split in enumerate(splits):
            ident = f"{'C' if label == 'case' else 'H'}{i + 1:03d}"
            k = rng.randint(5, 8)
            picked = rng.sample(pool, k)
            if label == "case" and i % 6 == 0:
                name = f"{ident}.cha"
                body = CHAT_HEADER + "\n".join(chat_line(s) for s in picked) + "\n@End\n"
            else:
                name = f"{ident}.txt"
                sep = " " if label == "control" else " . "
                body = sep.join(picked) + ("" if label == "control" else " .") + "\n"
            (root / "transcripts" / name).write_text(body, encoding="utf-8")
            age = rng.randint(58, 84)
            mmse = rng.randint(25, 30) if label == "control" else rng.randint(12, 24)
            rows.append([ident, label, split, f"transcripts/{name}", age, rng.choice("MF"), mmse])
    with open(root / "manifest.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "label", "split", "transcript_path", "age", "sex", "mmse"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
