"""Write the bundled systems as .mps files (default: systems/)."""
import argparse
from pathlib import Path

from membrane import systems

DEFAULT = ("pc2", "sync", "even_k4", "doubling")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=list(DEFAULT))
    ap.add_argument("-d", "--dir", default=str(Path(__file__).resolve().parent.parent / "systems"))
    args = ap.parse_args()
    out = Path(args.dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.names:
        path = out / f"{name}.mps"
        path.write_text(systems.canonical(name))
        print(path)


if __name__ == "__main__":
    main()
