"""Fail a pc2 instance at a chosen clock, reproduce it and replay the replica."""
import argparse

from membrane import canonical_serialize, systems
from membrane.mos import create_instance, inject, replay, reproduce, tick


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=261)
    ap.add_argument("--fault", type=int, default=20)
    ap.add_argument("--inject", type=int, nargs="*", default=[2, 5],
                    help="clocks at which a*6 enters label 3")
    args = ap.parse_args()

    inst = create_instance("A", systems.load("pc2"), args.seed, faults=[args.fault])
    while inst.running:
        if inst.clock in args.inject:
            inject(inst, {"a": 6}, "3")
        tick(inst)
    print(f"original: {inst.status} at clock {inst.clock}, {len(inst.log)} injections logged")

    twin = replay(reproduce(inst), args.fault)
    same = canonical_serialize(twin.current) == canonical_serialize(inst.current)
    print(f"replica {twin.name}: {twin.status} at clock {twin.clock}, byte-equal: {same}")
    print(canonical_serialize(twin.current))


if __name__ == "__main__":
    main()
