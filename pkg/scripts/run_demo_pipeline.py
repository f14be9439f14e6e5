"""Run the whole CLI pipeline on the bundled demo corpus.

    python scripts/run_demo_pipeline.py work/          # writes every artifact under work/

Steps: demo data -> train (row f recipe) -> encode -> mask -> index -> search -> eval.
"""

import sys
import time
from pathlib import Path

from splademask.cli import main as cli
from splademask.demo import DemoRecipe


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    root = Path(argv[0] if argv else "demo_run")
    k = str(DemoRecipe.k)

    def p(name):
        return str(root / name)

    steps = [
        ["demo", "-o", str(root)],
        ["init", "--projection-bias", str(DemoRecipe.projection_bias), "-o", p("untrained.bin")],
        ["train", "--config", p("config.toml"), "-o", p("trained.bin"), "--history", p("history.csv")],
    ]
    for tag in ("untrained", "trained"):
        steps += [
            ["encode", "--params", p(f"{tag}.bin"), "-i", p("corpus.jsonl"), "-o", p(f"{tag}_docs.jsonl")],
            ["encode", "--params", p(f"{tag}.bin"), "-i", p("eval_queries.jsonl"), "-o", p(f"{tag}_queries.jsonl")],
            ["mask", "-k", k, "-i", p(f"{tag}_docs.jsonl"), "-o", p(f"{tag}_docs_k.jsonl")],
            ["mask", "-k", k, "-i", p(f"{tag}_queries.jsonl"), "-o", p(f"{tag}_queries_k.jsonl")],
            ["index", "-i", p(f"{tag}_docs_k.jsonl"), "-o", p(f"{tag}.idx")],
            ["search", "--index", p(f"{tag}.idx"), "--queries", p(f"{tag}_queries_k.jsonl"), "-o", p(f"{tag}_run.txt")],
        ]
    start = time.perf_counter()
    for s in steps:
        print("splademask " + " ".join(s), file=sys.stderr)
        if cli(s) != 0:
            return 1
    for tag in ("untrained", "trained"):
        print(f"{tag:>9}: ", end="", flush=True)
        cli(["eval", "--run", p(f"{tag}_run.txt"), "--qrels", p("eval_qrels.txt")])
    print(f"done in {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
