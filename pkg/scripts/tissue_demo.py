"""Three pc2 instances in one group; B fails at clock 10 and is replaced."""
import argparse

from membrane import systems
from membrane.mos import FaultPoint, Tissue, tissue_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=3, help="seed of A; B and C follow")
    ap.add_argument("--fault", type=int, default=10, help="clock at which B fails")
    ap.add_argument("--budget", type=int, default=100)
    ap.add_argument("--events", help="write the event log (JSON lines) here")
    args = ap.parse_args()

    spec = systems.load("pc2")
    t = Tissue()
    for i, name in enumerate("ABC"):
        t.add("pc2", name, spec, args.seed + i)
    t.set_faults([FaultPoint("B", args.fault)])
    t.schedule("A", 2, {"a": 4}, "3")
    report = tissue_run(t, args.budget)

    for ev in t.sink.events:
        print(f"{ev.seq:4d} {ev.kind:<11s} {ev.instance:<6s} clock {ev.clock:<3d} {ev.detail}")
    for group, rows in report.groups.items():
        for r in rows:
            print(f"{group} {r['instance']}: {r['status']} at clock {r['clock']}, answer {r['answer']}")
    if args.events:
        with open(args.events, "w") as fh:
            fh.write(t.sink.to_jsonl())


if __name__ == "__main__":
    main()
