"""Per-dataset, per-depth training hyperparameters for the normalized models.

Keys: norm name -> dataset name -> depth -> (dropout, l1_weight, weight_decay, lr, epochs).
"""
from __future__ import annotations

PRESETS: dict[str, dict[str, dict[int, tuple[float, float, float, float, int]]]] = {'layernorm': {'amazon-photo': {2: (0.7, 0.001, 0.001, 0.005, 400),
                                4: (0.5, 0.005, 0.0005, 0.005, 400),
                                8: (0.7, 0.001, 0.0005, 0.005, 400),
                                16: (0.5, 0.001, 0.0005, 0.005, 400),
                                32: (0.6, 0.001, 0.0005, 0.005, 400),
                                64: (0.6, 0.0005, 0.001, 0.005, 400)},
               'citeseer': {2: (0.6, 0.01, 0.001, 0.005, 400),
                            4: (0.6, 0.005, 0.001, 0.005, 400),
                            8: (0.5, 0.005, 0.0005, 0.005, 400),
                            16: (0.5, 0.005, 0.0005, 0.005, 400),
                            32: (0.8, 0.0005, 0.001, 0.005, 400),
                            64: (0.7, 0.005, 0.001, 0.005, 400)},
               'coauthor-cs': {2: (0.0, 0.0005, 0.001, 0.005, 400),
                               4: (0.5, 0.0001, 0.001, 0.005, 400),
                               8: (0.6, 0.0001, 0.0005, 0.005, 400),
                               16: (0.6, 0.0001, 0.0005, 0.005, 400),
                               32: (0.6, 0.0001, 0.0005, 0.005, 400),
                               64: (0.5, 0.0, 0.001, 0.005, 400)},
               'cora': {2: (0.7, 0.001, 0.0005, 0.005, 400),
                        4: (0.8, 0.001, 0.0005, 0.005, 400),
                        8: (0.8, 0.001, 0.001, 0.005, 400),
                        16: (0.8, 0.001, 0.001, 0.005, 400),
                        32: (0.8, 0.005, 0.001, 0.005, 400),
                        64: (0.5, 0.001, 0.001, 0.005, 400)},
               'pubmed': {2: (0.6, 0.01, 0.0005, 0.005, 400),
                          4: (0.8, 0.005, 0.001, 0.005, 400),
                          8: (0.7, 0.01, 0.001, 0.005, 400),
                          16: (0.8, 0.005, 0.001, 0.005, 400),
                          32: (0.7, 0.005, 0.001, 0.005, 400),
                          64: (0.7, 0.01, 0.001, 0.005, 400)},
               'wiki-cs': {2: (0.5, 0.0, 0.0005, 0.005, 400),
                           4: (0.7, 0.0, 0.0005, 0.005, 400),
                           8: (0.7, 0.0, 0.0005, 0.005, 400),
                           16: (0.6, 0.0, 0.001, 0.005, 400),
                           32: (0.7, 0.0, 0.0005, 0.005, 400),
                           64: (0.6, 0.0001, 0.0005, 0.005, 400)}},
 'nodenorm1': {'amazon-photo': {2: (0.5, 0.0005, 0.0005, 0.005, 400),
                                4: (0.8, 0.001, 0.0005, 0.005, 400),
                                8: (0.8, 0.0005, 0.001, 0.005, 400),
                                16: (0.7, 0.001, 0.001, 0.005, 400),
                                32: (0.6, 0.001, 0.0005, 0.005, 400),
                                64: (0.5, 0.0001, 0.001, 0.005, 400)},
               'citeseer': {2: (0.6, 0.01, 0.0005, 0.005, 400),
                            4: (0.6, 0.01, 0.001, 0.005, 400),
                            8: (0.5, 0.005, 0.001, 0.005, 400),
                            16: (0.6, 0.001, 0.001, 0.005, 400),
                            32: (0.6, 0.005, 0.001, 0.005, 400),
                            64: (0.6, 0.01, 0.001, 0.005, 400)},
               'coauthor-cs': {2: (0.0, 0.0005, 0.001, 0.005, 400),
                               4: (0.6, 0.0001, 0.001, 0.005, 400),
                               8: (0.5, 0.0001, 0.0005, 0.005, 400),
                               16: (0.5, 0.0, 0.001, 0.005, 400),
                               32: (0.6, 0.0, 0.0005, 0.005, 400),
                               64: (0.5, 0.0, 0.001, 0.005, 400)},
               'cora': {2: (0.8, 0.0005, 0.0005, 0.005, 400),
                        4: (0.6, 0.01, 0.0005, 0.005, 400),
                        8: (0.7, 0.005, 0.001, 0.005, 400),
                        16: (0.8, 0.001, 0.001, 0.005, 400),
                        32: (0.7, 0.001, 0.0005, 0.005, 400),
                        64: (0.5, 0.0005, 0.001, 0.005, 400)},
               'pubmed': {2: (0.7, 0.005, 0.0005, 0.005, 400),
                          4: (0.6, 0.005, 0.0005, 0.005, 400),
                          8: (0.8, 0.005, 0.001, 0.005, 400),
                          16: (0.6, 0.01, 0.001, 0.005, 400),
                          32: (0.5, 0.005, 0.0005, 0.005, 400),
                          64: (0.7, 0.005, 0.0005, 0.005, 400)},
               'wiki-cs': {2: (0.3, 0.0, 0.0005, 0.005, 400),
                           4: (0.3, 0.0001, 0.0005, 0.005, 400),
                           8: (0.5, 0.0, 0.001, 0.005, 400),
                           16: (0.3, 0.0001, 0.001, 0.005, 400),
                           32: (0.3, 0.0, 0.001, 0.005, 400),
                           64: (0.3, 0.0, 0.001, 0.005, 400)}},
 'nodenorm2': {'amazon-photo': {2: (0.7, 0.0005, 0.001, 0.005, 400),
                                4: (0.6, 0.001, 0.0005, 0.005, 400),
                                8: (0.5, 0.0005, 0.0005, 0.005, 400),
                                16: (0.6, 0.001, 0.0005, 0.005, 400),
                                32: (0.6, 0.005, 0.001, 0.005, 400),
                                64: (0.0, 0.01, 0.001, 0.005, 400)},
               'citeseer': {2: (0.8, 0.0005, 0.001, 0.005, 400),
                            4: (0.6, 0.005, 0.0005, 0.005, 400),
                            8: (0.8, 0.001, 0.0005, 0.005, 400),
                            16: (0.8, 0.001, 0.0005, 0.005, 400),
                            32: (0.8, 0.001, 0.001, 0.005, 400),
                            64: (0.5, 0.005, 0.0005, 0.005, 400)},
               'coauthor-cs': {2: (0.6, 0.0, 0.001, 0.005, 400),
                               4: (0.5, 0.0001, 0.0005, 0.005, 400),
                               8: (0.7, 0.0001, 0.0005, 0.005, 400),
                               16: (0.7, 0.0001, 0.001, 0.005, 400),
                               32: (0.6, 0.0, 0.0005, 0.005, 400),
                               64: (0.7, 0.0, 0.001, 0.005, 400)},
               'cora': {2: (0.8, 0.0001, 0.0005, 0.005, 400),
                        4: (0.8, 0.001, 0.001, 0.005, 400),
                        8: (0.8, 0.0005, 0.001, 0.005, 400),
                        16: (0.8, 0.001, 0.001, 0.005, 400),
                        32: (0.6, 0.005, 0.0005, 0.005, 400),
                        64: (0.5, 0.01, 0.0005, 0.005, 400)},
               'pubmed': {2: (0.6, 0.001, 0.0005, 0.005, 400),
                          4: (0.8, 0.0005, 0.0005, 0.005, 400),
                          8: (0.6, 0.001, 0.0005, 0.005, 400),
                          16: (0.7, 0.005, 0.001, 0.005, 400),
                          32: (0.5, 0.01, 0.001, 0.005, 400),
                          64: (0.6, 0.005, 0.0005, 0.005, 400)},
               'wiki-cs': {2: (0.6, 0.0, 0.0005, 0.005, 400),
                           4: (0.6, 0.0001, 0.0005, 0.005, 400),
                           8: (0.6, 0.0, 0.001, 0.005, 400),
                           16: (0.5, 0.0001, 0.001, 0.005, 400),
                           32: (0.3, 0.0001, 0.0005, 0.005, 400),
                           64: (0.3, 0.005, 0.0005, 0.005, 400)}},
 'nodenorm3': {'amazon-photo': {2: (0.5, 0.0005, 0.0005, 0.005, 400),
                                4: (0.5, 0.001, 0.001, 0.005, 400),
                                8: (0.6, 0.0005, 0.001, 0.005, 400),
                                16: (0.5, 0.005, 0.001, 0.005, 400),
                                32: (0.0, 0.01, 0.001, 0.005, 400),
                                64: (0.0, 0.0005, 0.0005, 0.005, 400)},
               'citeseer': {2: (0.8, 0.0001, 0.0005, 0.005, 400),
                            4: (0.8, 0.001, 0.0005, 0.005, 400),
                            8: (0.8, 0.001, 0.001, 0.005, 400),
                            16: (0.8, 0.001, 0.0005, 0.005, 400),
                            32: (0.5, 0.001, 0.0005, 0.005, 400),
                            64: (0.5, 0.005, 0.001, 0.005, 400)},
               'coauthor-cs': {2: (0.5, 0.0, 0.001, 0.005, 400),
                               4: (0.5, 0.001, 0.0005, 0.005, 400),
                               8: (0.5, 0.0, 0.0005, 0.005, 400),
                               16: (0.8, 0.0, 0.001, 0.005, 400),
                               32: (0.5, 0.0005, 0.0005, 0.005, 400),
                               64: (0.5, 0.0005, 0.001, 0.005, 400)},
               'cora': {2: (0.8, 0.0001, 0.0005, 0.005, 400),
                        4: (0.8, 0.001, 0.0005, 0.005, 400),
                        8: (0.8, 0.001, 0.0005, 0.005, 400),
                        16: (0.7, 0.001, 0.001, 0.005, 400),
                        32: (0.0, 0.005, 0.0005, 0.005, 400),
                        64: (0.0, 0.005, 0.0005, 0.005, 400)},
               'pubmed': {2: (0.6, 0.0005, 0.0005, 0.005, 400),
                          4: (0.7, 0.001, 0.0005, 0.005, 400),
                          8: (0.7, 0.0005, 0.0005, 0.005, 400),
                          16: (0.6, 0.005, 0.0005, 0.005, 400),
                          32: (0.5, 0.001, 0.0005, 0.005, 400),
                          64: (0.6, 0.005, 0.001, 0.005, 400)},
               'wiki-cs': {2: (0.5, 0.0, 0.001, 0.005, 400),
                           4: (0.6, 0.0, 0.001, 0.005, 400),
                           8: (0.5, 0.0, 0.0005, 0.005, 400),
                           16: (0.3, 0.0005, 0.001, 0.005, 400),
                           32: (0.7, 0.0001, 0.001, 0.001, 1500),
                           64: (0.6, 0.0, 0.0005, 0.001, 1500)}}}

# LayerNorm* and LayerNorm-MS reuse the affine LayerNorm settings
PRESETS["layernorm-star"] = PRESETS["layernorm"]
PRESETS["layernorm-ms"] = PRESETS["layernorm"]

# no per-depth table exists for the unnormalized baselines
BASELINE = (0.5, 0.0, 5e-4, 0.005, 400)


def lookup(norm: str, dataset: str, depth: int) -> tuple[float, float, float, float, int]:
    """Settings for ``(norm, dataset, depth)``; falls back to :data:`BASELINE`."""
    table = PRESETS.get(norm, {}).get(dataset.lower(), {})
    return table.get(depth, BASELINE)
