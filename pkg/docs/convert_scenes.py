#!/usr/bin/env python3
"""Convert the public hyperspectral benchmark scenes to HSIC/HSIL containers.

The scenes ship as MATLAB files (e.g. Indian_pines_corrected.mat +
Indian_pines_gt.mat). This helper is documentation, not part of the
package: it needs scipy, which the toolkit itself does not depend on.

Usage:
    python convert_scenes.py Indian_pines_corrected.mat Indian_pines_gt.mat \
        indian_pines.hsic indian_pines.hsil
"""

import sys

import numpy as np
import scipy.io

from hsiaccel.hsi_io import HsiCube, LabelMap, write_cube, write_labels


def main(cube_mat, gt_mat, out_cube, out_labels):
    raw = scipy.io.loadmat(cube_mat)
    data = next(v for v in raw.values() if isinstance(v, np.ndarray) and v.ndim == 3)
    gt = scipy.io.loadmat(gt_mat)
    labels = next(v for v in gt.values() if isinstance(v, np.ndarray) and v.ndim == 2)

    h, w, bands = data.shape
    data = data.astype(np.float64)
    lo, hi = data.min(), data.max()
    data = (data - lo) / (hi - lo)  # global minmax, matching normalize()

    write_cube(HsiCube(w, h, bands, data.astype(np.float32)), out_cube)
    write_labels(LabelMap(w, h, labels.astype(np.uint16)), out_labels)
    print(f"{out_cube}: {w}x{h}x{bands}")
    print(f"{out_labels}: {int((labels > 0).sum())} labeled pixels, {labels.max()} classes")


if __name__ == "__main__":
    if len(sys.argv) != 5:
        print(__doc__)
        sys.exit(2)
    main(*sys.argv[1:])
