"""Subtree-size limits of growing binary trees: growth models, limit measures and checks."""
from .words import ROOT, Word, as_word, is_prefix, longest_common_prefix
from .tree import BinaryTree, InsertionError, complete_tree, group_act, insert, tree_distance
from .measures import (
    DyadicMeasure, LazyWord, bernoulli_measure, boundary_measure, check_additivity,
    cylinder_masses, mass, point_mass, sample_bst_limit, sample_path, t0, table_measure,
    ultrametric, uniform_measure,
)
from .growth import (
    GrowthModel, Trajectory, all_trajectories, bst_grow, bst_grow_from_values, catalan,
    dst_grow, entry_time, remy_grow, trajectory_probability, uniform_tree,
)

__version__ = "0.1.0"
