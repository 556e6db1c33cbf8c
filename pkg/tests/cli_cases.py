"""CLI invocations pinned by golden files; regenerate with ``python3 tests/cli_cases.py``."""

from pathlib import Path

GOLDEN = Path(__file__).parent / "golden"

# name -> argv; "{golden}" expands to the golden directory, "{out}" to the output file
CASES = {
    **{f"pattern_k{k}.json": ["pattern", "--k", str(k), "--out", "{out}"] for k in range(4)},
    "schedule_conservative.json": ["schedule", "--stages", "3", "--out", "{out}"],
    "schedule_override.json": ["schedule", "--stages", "3", "--delta-override", "{golden}/delta_k1-3.json", "--out", "{out}"],
    **{f"certify_k{k}.json": ["certify", "--k", str(k), "--bisect", "8", "--out", "{out}"] for k in range(1, 4)},
    "delta_k1-3.json": ["delta", "--k", "1..3", "--iterations", "8", "--scale", "0.5", "--out", "{out}"],
    "run_huber.json": ["run", "--objective", "huber", "--budget", "3000", "--delta-override", "{golden}/delta_k1-3.json", "--out", "{out}"],
    "run_diagquad.json": ["run", "--objective", "diagquad", "--dim", "5", "--budget", "2000", "--delta-override", "{golden}/delta_k1-3.json", "--out", "{out}"],
    "trace_quadratic.csv": ["run", "--objective", "quadratic", "--budget", "60", "--trace", "{out}"],
    "trace_logsumexp.csv.gz": ["run", "--objective", "logsumexp", "--dim", "3", "--budget", "40", "--trace", "{out}"],
    "adversary_block1.json": ["adversary", "--steps", "1.5,5,1.5", "--out", "{out}"],
    "adversary_long.json": ["adversary", "--steps", "1.5,6,1.5", "--out", "{out}"],
    "sweep_k1-3.md": ["sweep", "--k", "1..3", "--bisect", "8", "--out", "{out}"],
}

# expected exit status where it is not 0
EXIT = {"adversary_long.json": 0}


def expand(argv, out):
    return [a.replace("{golden}", str(GOLDEN)).replace("{out}", str(out)) for a in argv]


if __name__ == "__main__":
    from longstep.cli import main

    GOLDEN.mkdir(exist_ok=True)
    # the delta file feeds other cases, so write it first
    order = sorted(CASES, key=lambda n: not n.startswith("delta"))
    for name in order:
        rc = main(expand(CASES[name], GOLDEN / name))
        print(f"{name}: exit {rc}")
