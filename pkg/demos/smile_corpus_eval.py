"""Generate a synthetic face corpus, push it through the smile pipeline, score it.

Mirrors what ``framegrind gen-corpus``, ``framegrind run`` and ``framegrind
eval`` do from the shell, but keeps the intermediate objects in hand so the
per-curvature behaviour of the stand-in classifier can be printed.

    python demos/smile_corpus_eval.py --n 200 --out /tmp/smiles
"""

import argparse
import csv
import os

import numpy as np

from framegrind import cli
from framegrind.dataset import generate_corpus, load_manifest, read_scores


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="smile_demo")
    args = ap.parse_args()

    corpus = os.path.join(args.out, "corpus")
    generate_corpus(args.n, args.seed, corpus)
    run_dir = os.path.join(args.out, "run")
    cli.cmd_run("smile", input_dir=corpus, out_dir=run_dir)

    scores = {r.path: r.score for r in read_scores(os.path.join(run_dir, "scores.csv"))}
    with open(os.path.join(corpus, "params.csv")) as fh:
        kappa = {r["path"]: float(r["kappa"]) for r in csv.DictReader(fh)}

    edges = np.linspace(-1, 1, 9)
    print("curvature bin      n   mean p(smile)")
    for lo, hi in zip(edges[:-1], edges[1:]):
        ps = [scores[p] for p, k in kappa.items() if lo <= k < hi and p in scores]
        if ps:
            print(f"[{lo:+.2f}, {hi:+.2f})  {len(ps):4d}   {np.mean(ps):.3f}")

    manifest = load_manifest(os.path.join(corpus, "manifest.csv"))
    metrics = cli.evaluate(manifest, read_scores(os.path.join(run_dir, "scores.csv")))
    print(f"all faces: ACC {metrics['accuracy']:.3f}  AUC {metrics['auc']:.3f}")


if __name__ == "__main__":
    main()
