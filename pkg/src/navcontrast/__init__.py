"""Contrastive instruction-trajectory learning on synthetic navigation graphs.

A small, fully testable stack: graph environments with sub-optimal
trajectory enumeration, instruction augmentation, coarse and fine
contrastive losses with pair mining and memory banks, and a toy agent
trained with imitation + actor-critic + contrastive objectives.
"""

__version__ = "0.1.0"
