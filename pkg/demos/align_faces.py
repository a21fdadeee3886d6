"""Render a few tilted faces and write them next to their aligned crops.

The aligned crops put the eyes and mouth at the template positions regardless
of the pose of the source face. Output is plain PPM, viewable with most image
tools.

    python demos/align_faces.py --out /tmp/aligned
"""

import argparse
import os

import numpy as np

from framegrind.geometry import default_template, fit_similarity
from framegrind.image import write_pnm
from framegrind.stages import align_stage, render_synthetic_face, sample_face_params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=160, help="aligned crop side")
    ap.add_argument("--out", default="aligned_demo")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    template = default_template(args.size)
    rng = np.random.default_rng(args.seed)
    for i in range(args.n):
        params = sample_face_params(rng, 200, 200, max_rotation=0.6)
        img, lm, box = render_synthetic_face(params, 200, 200)
        t = fit_similarity(lm, template)
        aligned = align_stage(img, box, lm, template, args.size)
        write_pnm(os.path.join(args.out, f"face_{i}.ppm"), img)
        write_pnm(os.path.join(args.out, f"face_{i}_aligned.ppm"), aligned)
        # the fit maps the face onto the template, so it undoes the head tilt
        print(f"face {i}: tilt {np.degrees(params.rotation):+6.1f} deg, correction "
              f"{np.degrees(t.theta):+6.1f} deg, scale {t.s:.3f}, kappa {params.kappa:+.2f}")
    print(f"wrote {2 * args.n} images to {args.out}")


if __name__ == "__main__":
    main()
