"""Compare density scorers on auto-labeled preference pairs.

The demo pair set labels the image nearer a true cluster center as the
winner.  A good per-image scorer should agree with those labels; a
random scorer hovers near 0.5.
"""

import numpy as np

from giqa.demo import make_generated, make_graded_pairs, make_real
from giqa.gmm import EmConfig, fit_gmm, score_gmm
from giqa.knn import build_index, score_knn
from giqa.metrics import ScoreTable, pair_accuracy

real = make_real(600, seed=0)
generated = make_generated(600, seed=1, noise=1.0)
pairs = make_graded_pairs(generated, seed=2)
print(f"{len(pairs.pairs)} auto-labeled pairs")

gmm = fit_gmm(real, n_components=2, covariance_type="full", config=EmConfig(seed=0))
gmm_table = score_gmm(gmm, generated)

knn_table = score_knn(build_index(real), generated, k=3)

rng = np.random.default_rng(3)
random_table = ScoreTable(ids=generated.ids, raw=rng.random(generated.count))

for name, table in (("gmm", gmm_table), ("knn", knn_table), ("random", random_table)):
    print(f"{name:>6}: pair accuracy {pair_accuracy(table, pairs):.4f}")
