#!/usr/bin/env python3
"""Regenerates data/sample: two years of emergency-department visits with a
seasonal influenza signal and weekly laboratory-confirmed case counts."""

import json
import math
import random
from collections import Counter
from datetime import date, timedelta
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "sample"
START = date(2018, 1, 1)
DAYS = 728
rng = random.Random(7)

SCHEMA = [
    ("age_group", "discrete", 1),
    ("sex", "discrete", 1),
    ("zip3", "discrete", 1),
    ("arrival_mode", "discrete", 1),
    ("temperature", "numeric", 2),
    ("heart_rate", "numeric", 2),
    ("resp_rate", "numeric", 2),
    ("o2_sat", "numeric", 2),
    ("complaint", "discrete", 3),
    ("acuity", "discrete", 3),
    ("pain_score", "numeric", 3),
    ("icd", "discrete", 4),
    ("disposition", "discrete", 4),
    ("xray", "discrete", 4),
    ("flu_test", "discrete", 4),
]

OTHER_ICD = ["S06", "R07", "R10", "M54", "N39", "K52", "J06", "J20", "I10", "F32", "R51", "Z00"]


def season(day):
    # Winter peak centred mid-January each year.
    phase = ((day - 14) % 364) / 364.0
    return math.exp(-((min(phase, 1 - phase) * 364) / 25.0) ** 2)


def pick(weights):
    return rng.choices(list(weights), weights=list(weights.values()))[0]


def maybe(value, p_missing):
    return "" if rng.random() < p_missing else value


rows = []
for d in range(DAYS):
    day = START + timedelta(days=d)
    s = season(d)
    for _ in range(rng.randint(14, 20)):
        rows.append((day, False))
    for _ in range(int(rng.gauss(1 + 12 * s, 1 + 2 * s))):
        rows.append((day, True))

lab = Counter()
lines = []
for day, flu in rows:
    age = pick({"0-4": 1, "5-17": 2, "18-44": 4, "45-64": 3, "65+": 2 + flu})
    temp = rng.gauss(38.6, 0.6) if flu else rng.gauss(36.9, 0.5)
    cells = {
        "age_group": age,
        "sex": rng.choice(["F", "M"]),
        "zip3": rng.choice(["100", "101", "102", "103", "104"]),
        "arrival_mode": pick({"walk-in": 6, "ambulance": 2 + flu}),
        "temperature": maybe(f"{temp:.1f}", 0.05),
        "heart_rate": maybe(str(round(rng.gauss(98 if flu else 82, 12))), 0.04),
        "resp_rate": maybe(str(round(rng.gauss(21 if flu else 16, 3))), 0.08),
        "o2_sat": maybe(str(min(100, round(rng.gauss(95 if flu else 98, 2)))), 0.1),
        "complaint": pick({"fever": 5, "cough": 4, "malaise": 2, "dyspnea": 1}) if flu
        else pick({"injury": 5, "chest pain": 2, "abdominal pain": 3, "headache": 2, "cough": 1, "fever": 1}),
        "acuity": pick({"2": 1, "3": 3, "4": 2}) if flu else pick({"1": 1, "2": 2, "3": 4, "4": 3, "5": 2}),
        "pain_score": maybe(str(rng.randint(0, 10)), 0.2),
        "icd": (pick({"J10": 3, "J11": 4, "J06": 2, "R50": 1}) if flu else rng.choice(OTHER_ICD)),
        "disposition": pick({"discharged": 7, "admitted": 2 + flu, "transferred": 1}),
        "xray": pick({"yes": 1 + 2 * flu, "no": 4}),
        "flu_test": maybe(pick({"positive": 3, "negative": 1}) if flu else pick({"negative": 1}), 0.6),
    }
    if flu and rng.random() < 0.35:
        lab[day] += 1
    lines.append("\t".join([day.isoformat()] + [cells[name] for name, _, _ in SCHEMA]))

OUT.mkdir(parents=True, exist_ok=True)
(OUT / "instances.tsv").write_text("\t".join(["date"] + [n for n, _, _ in SCHEMA]) + "\n" + "\n".join(lines) + "\n")
(OUT / "schema.json").write_text(
    json.dumps([{"name": n, "kind": k, "category": c} for n, k, c in SCHEMA], indent=2) + "\n"
)

weekly = Counter()
for day, n in lab.items():
    y, w, _ = day.isocalendar()
    weekly[(y, w)] += n
first = START
last = START + timedelta(days=DAYS - 1)
out = ["bucket\tcount"]
d = first
while d <= last:
    y, w, _ = d.isocalendar()
    out.append(f"{y:04}-W{w:02}\t{weekly[(y, w)]}")
    d += timedelta(days=7)
(OUT / "flu_weekly.tsv").write_text("\n".join(out) + "\n")
(OUT / "influenza.syn").write_text('icd = "J10"\nOR icd = "J11"\n')
(OUT / "blacklist.txt").write_text("# diagnosis codes and lab results leak the target\nicd\nflu_test\n")
print(f"{len(lines)} instances, {len(out) - 1} weeks")
