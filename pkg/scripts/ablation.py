"""Masking / decay / KL ablation grid on the synthetic demo corpus.

    python scripts/ablation.py                       # one corpus seed, all rows
    python scripts/ablation.py --seeds 13 1 2 3 --out results/ablation.csv

Rows:
  untrained  initial params, masked at k
  2          full fine-tuning, no masking
  a          frozen projection, no masking
  b          as a, top-k masking only at inference
  c / d      joint masking, constant k / decaying k
  e / f      c / d plus the KL self-learning term

Rows 2 and a are indexed unmasked; everything else at k.
"""

import argparse
import csv
import statistics
import sys
import time

from splademask import index as impact_index
from splademask.demo import DemoRecipe, make_demo_corpus
from splademask.pipeline import evaluate_params
from splademask.trainer import train

ROWS = ("untrained", "2", "a", "b", "c", "d", "e", "f")
UNMASKED = {"2", "a"}


def run_seed(corpus_seed: int, recipe: DemoRecipe, rows) -> list[dict]:
    corpus = make_demo_corpus(seed=corpus_seed)
    passages, queries = list(corpus.passages.items()), list(corpus.eval_queries.items())
    params = recipe.init_params()
    configs = recipe.configs(len(corpus.triples))
    out = []
    for row in rows:
        start = time.perf_counter()
        trained = params if row == "untrained" else train(params, corpus.triples, configs[row]).params
        k = None if row in UNMASKED else recipe.k
        rep = evaluate_params(trained, passages, queries, corpus.eval_qrels, k=k)
        out.append(
            dict(
                seed=corpus_seed,
                row=row,
                mrr_at_10=rep.mrr_at_10,
                ndcg_at_10=rep.ndcg_at_10,
                avg_nnz=rep.avg_nnz,
                total_postings=rep.total_postings,
                seconds=time.perf_counter() - start,
            )
        )
        print(f"seed {corpus_seed:>3} row {row:>9}: mrr@10={rep.mrr_at_10:.3f} ndcg@10={rep.ndcg_at_10:.3f} avg_nnz={rep.avg_nnz:.1f}", file=sys.stderr)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, nargs="+", default=[13])
    ap.add_argument("--rows", nargs="+", default=list(ROWS), choices=ROWS)
    ap.add_argument("--k", type=int, default=DemoRecipe.k)
    ap.add_argument("--epochs", type=int, default=DemoRecipe.epochs)
    ap.add_argument("--out", help="CSV output path")
    args = ap.parse_args(argv)

    recipe = DemoRecipe(k=args.k, epochs=args.epochs)
    results = [r for s in args.seeds for r in run_seed(s, recipe, args.rows)]

    print(f"{'row':>9}  {'mrr@10':>8}  {'ndcg@10':>8}  {'avg_nnz':>8}")
    for row in args.rows:
        sel = [r for r in results if r["row"] == row]
        print(
            f"{row:>9}  {statistics.mean(r['mrr_at_10'] for r in sel):8.3f}  "
            f"{statistics.mean(r['ndcg_at_10'] for r in sel):8.3f}  {statistics.mean(r['avg_nnz'] for r in sel):8.1f}"
        )
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(results[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(results)
    return 0


if __name__ == "__main__":
    sys.exit(main())
