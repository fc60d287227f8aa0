#!/usr/bin/env python3
"""Regenerate the bundled demo corpus (200 labeled short messages).

The output is committed to src/semlab/data/demo_corpus.tsv; rerunning this
script with the default seed reproduces it byte for byte.

Usage:
    python scripts/make_demo_corpus.py [--seed 7] [--out PATH]
"""
import argparse
import random
from pathlib import Path

SPAM_TEMPLATES = [
    "congratulations, you have won a {adj} {prize}, so call now to claim your reward today.",
    "you are {adv} selected for this {adj} {prize}, reply yes to claim it now.",
    "urgent notice, your account has a {adj} bonus waiting, click the link to get the {prize}.",
    "win a {adj} {prize} this week, just text win to our number and claim it.",
    "final reminder, a {adj} {prize} is {adv} reserved for you, call the free number now.",
    "get a {adj} loan today with no credit check, apply now and receive the cash {adv}.",
    "exclusive offer, buy one {item} and get a {adj} {prize} for free this weekend.",
    "you have been chosen to receive a {adj} {prize}, send your details to claim the reward.",
    "claim your {adj} cash prize now, this offer ends tonight so reply {adv}.",
    "hot deal, the {adj} {item} is now half price, order {adv} before the stock ends.",
    "dear winner, your mobile number won a {adj} {prize} in our weekly draw, call us now.",
    "earn {adj} money from home every week, text job to this number to start {adv}.",
]
HAM_TEMPLATES = [
    "i will meet you at the {place} after {time}, so please bring the {item}.",
    "can you {adv} pick up some {food} on the way home from the {place}?",
    "the meeting at the {place} is moved to {time}, let me know if that works.",
    "thanks for the {adj} dinner last night, we should do it again soon.",
    "i am {adv} running late, see you at the {place} around {time}.",
    "mom called and asked if you could bring the {item} to the {place} on sunday.",
    "did you finish the {adj} report, the team wants to read it before {time}?",
    "we are watching a {adj} movie at the {place} tonight, do you want to join us?",
    "my sister says the {food} at the {place} was {adv} good, we should try it.",
    "please remember to water the plants and feed the cat before {time}.",
    "i left the {item} at your {place}, can you keep it until {time}?",
    "the kids had a {adj} day at the {place} and they slept {adv} after dinner.",
]
FILL = {
    "spam": {
        "adj": ["free", "exclusive", "amazing", "huge", "special", "guaranteed", "limited", "big"],
        "adv": ["personally", "specially", "quickly", "instantly", "already"],
        "prize": ["holiday", "phone", "voucher", "cruise", "laptop", "gift card", "car", "cash bonus"],
        "item": ["phone", "watch", "laptop", "ticket", "camera"],
    },
    "ham": {
        "adj": ["nice", "lovely", "long", "quiet", "funny", "great", "short", "busy"],
        "adv": ["really", "probably", "quickly", "just", "finally"],
        "place": ["office", "station", "library", "park", "cafe", "school", "gym", "house"],
        "time": ["lunch", "noon", "six", "dinner", "class", "work", "the game"],
        "item": ["umbrella", "keys", "charger", "book", "laptop", "jacket"],
        "food": ["bread", "milk", "pizza", "rice", "fruit", "coffee"],
    },
}


def fill(template, slots, rnd):
    out = template
    while "{" in out:
        start = out.index("{")
        end = out.index("}", start)
        key = out[start + 1:end]
        out = out[:start] + rnd.choice(slots[key]) + out[end + 1:]
    return out


def generate(seed, per_class=100):
    rnd = random.Random(seed)
    rows = []
    for label, templates in (("spam", SPAM_TEMPLATES), ("ham", HAM_TEMPLATES)):
        seen = set()
        while len(seen) < per_class:
            text = fill(rnd.choice(templates), FILL[label], rnd)
            text = text[0].upper() + text[1:]
            if text not in seen:
                seen.add(text)
                rows.append((label, text))
    rnd.shuffle(rows)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument(
        "--out", type=Path,
        default=Path(__file__).resolve().parent.parent / "src/semlab/data/demo_corpus.tsv",
    )
    args = parser.parse_args()
    rows = generate(args.seed)
    args.out.write_text("".join(f"{label}\t{text}\n" for label, text in rows), encoding="utf-8")
    print(f"wrote {len(rows)} sentences to {args.out}")


if __name__ == "__main__":
    main()
