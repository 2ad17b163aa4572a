#!/usr/bin/env python3
"""Writes the synthetic fixture data under data/fixtures/.

diaries.csv      reference travel diaries (survey-like)
diaries_alt.csv  a second diary set with shifted timing (model-output-like)
roster.csv       200 households, 500 agents
run.toml         mock run over the roster

Deterministic; rerun after changing the generator and commit the output.
"""
import argparse
import csv
import pathlib
import random

DIARY_HEADER = ["household_id", "agent_id", "relationship", "group_tags", "activity_code", "start", "end",
                "participants"]
ROSTER_HEADER = ["household_id", "agent_id", "gender", "age", "education", "student_status", "employment_status",
                 "relationship", "income_level", "has_driver_license", "location"]

HOME, WORK, SCHOOL, CARE, GOODS, SERVICES, MEALS, ERRANDS, REC, EXERCISE, VISIT, HEALTH, RELIGIOUS, OTHER, DROP = \
    range(1, 16)


def hhmm(m):
    return f"{m // 60:02d}:{m % 60:02d}"


def r5(x):
    return int(round(x / 5.0)) * 5


class Person:
    def __init__(self, pid, relationship, age, student, worker):
        self.pid = pid
        self.relationship = relationship
        self.age = age
        self.student = student
        self.worker = worker

    def tags(self):
        out = []
        if self.student:
            out.append("student")
        if self.worker:
            out.append("worker")
        return out


def household_members(rng, hid, size):
    members = []
    head_age = rng.randint(24, 78)
    head_worker = head_age < 66 and rng.random() < 0.78
    members.append(Person(f"{hid}-1", "head", head_age, head_age < 30 and rng.random() < 0.1, head_worker))
    n = 1
    if size >= 2:
        if rng.random() < 0.8:
            age = max(20, head_age + rng.randint(-6, 6))
            members.append(Person(f"{hid}-2", "spouse", age, False, age < 66 and rng.random() < 0.6))
        else:
            age = rng.randint(20, 85)
            members.append(Person(f"{hid}-2", "other", age, age < 25, age < 66 and rng.random() < 0.5))
        n = 2
    while n < size:
        n += 1
        age = rng.randint(3, min(30, max(3, head_age - 18)))
        student = 5 <= age <= 22 and rng.random() < 0.92
        worker = age >= 17 and not student and rng.random() < 0.6
        members.append(Person(f"{hid}-{n}", "child", age, student, worker))
    return members


def base_schedule(rng, p, shift):
    """Solo day as a list of [start, end, type]; shift moves daytime anchors."""
    acts = []
    wake = r5(rng.gauss(420 + shift, 45))
    wake = min(max(wake, 300), 600)
    t = wake
    acts.append([0, wake, HOME])
    if p.worker:
        t += r5(rng.uniform(15, 50))
        work_len = r5(rng.gauss(510, 60))
        if rng.random() < 0.35:
            half = r5(work_len * rng.uniform(0.4, 0.55))
            acts.append([t, t + half, WORK])
            t += half
            lunch = r5(rng.uniform(30, 60))
            acts.append([t, t + lunch, MEALS if rng.random() < 0.7 else ERRANDS])
            t += lunch + 5
            acts.append([t, t + work_len - half, WORK])
            t += work_len - half
        else:
            acts.append([t, t + work_len, WORK])
            t += work_len
    elif p.student:
        t += r5(rng.uniform(10, 35))
        school_len = r5(rng.gauss(400 if p.age < 18 else 300, 40))
        acts.append([t, t + school_len, SCHOOL])
        t += school_len
    else:
        k = rng.choice([0, 1, 1, 2, 2, 3])
        for _ in range(k):
            t += r5(rng.uniform(20, 120))
            kind = rng.choices([GOODS, SERVICES, ERRANDS, EXERCISE, VISIT, HEALTH, RELIGIOUS, OTHER, CARE],
                               [30, 10, 15, 12, 10, 7, 4, 6, 6])[0]
            length = r5(rng.uniform(20, 140))
            acts.append([t, t + length, kind])
            t += length
    # afternoon / evening activities
    k = rng.choices([0, 1, 2, 3], [30, 40, 22, 8])[0]
    for _ in range(k):
        t += r5(rng.uniform(10, 60))
        if t > 1290:
            break
        kind = rng.choices([GOODS, MEALS, REC, EXERCISE, VISIT, ERRANDS, SERVICES, OTHER],
                           [20, 18, 16, 12, 12, 10, 6, 6])[0]
        length = r5(rng.uniform(20, 150))
        acts.append([t, t + length, kind])
        t += length
    t += r5(rng.uniform(10, 40))
    if t < 1430:
        acts.append([t, 1440, HOME])
    acts = [a for a in acts if a[0] < a[1] and a[1] <= 1440]
    # keep it ordered and non-overlapping
    out = []
    for a in sorted(acts):
        if out and a[0] < out[-1][1]:
            a[0] = out[-1][1]
        if a[1] - a[0] >= 5:
            out.append(a)
    return out


def carve(acts, s, e):
    """Removes [s, e) from a schedule, trimming or splitting activities."""
    out = []
    for a0, a1, t in acts:
        if a1 <= s or a0 >= e:
            out.append([a0, a1, t])
            continue
        if a0 < s and s - a0 >= 10:
            out.append([a0, s, t])
        if a1 > e and a1 - e >= 10:
            out.append([e, a1, t])
    return sorted(out)


def household_diary(rng, hid, members, shift, joint_bias):
    schedules = {p.pid: [[a0, a1, t, []] for a0, a1, t in base_schedule(rng, p, shift)] for p in members}
    events = []
    if len(members) >= 2:
        # family dinner
        if rng.random() < 0.35 * joint_bias:
            who = [p for p in members if rng.random() < 0.8]
            if len(who) >= 2:
                s = r5(rng.gauss(1110 + shift, 40))
                events.append((MEALS, s, s + r5(rng.uniform(45, 90)), who))
        # weekend-style shared errand or recreation
        if rng.random() < 0.25 * joint_bias:
            who = rng.sample(members, 2)
            s = r5(rng.gauss(1020 + shift, 60))
            events.append((rng.choice([GOODS, REC, VISIT, RELIGIOUS]), s, s + r5(rng.uniform(40, 120)), who))
        # school drop off
        kids = [p for p in members if p.relationship == "child" and p.student and p.age < 14]
        if kids and rng.random() < 0.5 * joint_bias:
            s = r5(rng.gauss(465 + shift, 15))
            events.append((DROP, s, s + 15, [members[0], kids[0]]))
    used = []
    for ev in events:
        t, s, e, who = ev
        if s < 0 or e > 1440 or any(s < ue and us < e for us, ue in used):
            continue
        used.append((s, e))
        for p in who:
            acts = carve([[a0, a1, ty] for a0, a1, ty, _ in schedules[p.pid]], s - 5, e + 5)
            others = sorted(q.pid for q in who if q.pid != p.pid)
            kept = [[a0, a1, ty, ps] for (a0, a1, ty), ps in
                    zip(acts, [[] for _ in acts])]
            # restore participants on activities that are themselves joint
            joint_lookup = {(a0, a1, ty): ps for a0, a1, ty, ps in schedules[p.pid] if ps}
            for k in kept:
                k[3] = joint_lookup.get((k[0], k[1], k[2]), [])
            kept.append([s, e, t, others])
            schedules[p.pid] = sorted(kept)
    rows = []
    for p in members:
        for a0, a1, ty, ps in schedules[p.pid]:
            rows.append([hid, p.pid, p.relationship, ";".join(p.tags()), ty, hhmm(a0), hhmm(a1), ";".join(ps)])
    return rows


def write_diaries(path, seed, households, prefix, shift, joint_bias):
    rng = random.Random(seed)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DIARY_HEADER)
        for i in range(households):
            hid = f"{prefix}{i + 1:03d}"
            size = rng.choices([1, 2, 3, 4, 5], [22, 32, 22, 17, 7])[0]
            for row in household_diary(rng, hid, household_members(rng, hid, size), shift, joint_bias):
                w.writerow(row)


def write_roster(path, seed):
    rng = random.Random(seed)
    sizes = [1] * 45 + [2] * 60 + [3] * 55 + [4] * 30 + [5] * 10
    rng.shuffle(sizes)
    educations = ["less than high school", "high school graduate", "some college", "bachelor's degree",
                  "graduate degree"]
    incomes = ["under $25,000", "$25,000-$49,999", "$50,000-$99,999", "$100,000-$149,999", "$150,000 or more"]
    places = ["Los Angeles County", "Orange County", "Riverside County", "San Bernardino County", "Ventura County"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n", quoting=csv.QUOTE_MINIMAL, escapechar="\\", doublequote=False)
        w.writerow(ROSTER_HEADER)
        for i, size in enumerate(sizes):
            hid = f"h{i + 1:03d}"
            place = rng.choice(places)
            income = rng.choice(incomes)
            for p in household_members(rng, hid, size):
                if p.student:
                    edu = "some college" if p.age >= 18 else "less than high school"
                elif p.age < 18:
                    edu = "less than high school"
                else:
                    edu = rng.choice(educations)
                employment = "employed" if p.worker else ("retired" if p.age >= 62 else "unemployed")
                w.writerow([hid, p.pid, rng.choice(["female", "male"]), p.age, edu,
                            "student" if p.student else "non-student", employment, p.relationship, income,
                            "true" if p.age >= 16 and rng.random() < 0.9 else "false", place])


RUN_TOML = """# Mock run over the fixture roster.
[run]
seed = 7
sample_size = 500
feedback = true
reconcile = true
tolerance = 15
max_parse_retries = 3
concurrency = 1
roster = "roster.csv"
stats = "stats.json"
examples = "diaries.csv"
out = "../../out/run"

[backend]
kind = "mock"
endpoint_url = "https://api.openai.com/v1"
model = "gpt-4o-mini"
temperature = 1.0
max_retries = 3
timeout_s = 60
api_key_env = "OPENAI_API_KEY"

[mock]
seed = 7
hallucination_rate = 0.3
guidance_compliance = 0.9
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "fixtures"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_diaries(out / "diaries.csv", 2017, 160, "n", 0, 2.2)
    write_diaries(out / "diaries_alt.csv", 2019, 160, "s", 25, 1.5)
    write_roster(out / "roster.csv", 500)
    (out / "run.toml").write_text(RUN_TOML)


if __name__ == "__main__":
    main()
