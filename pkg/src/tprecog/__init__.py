"""Recognition of rigid 3D objects in range data by hypothesize and test.

Candidate surface features are scored from local point relations, feature
triples index pose hypotheses through a geometric hash, and hypotheses are
tested in order of a truncated probability until one explains the data.
"""
from .errors import (DegenerateFit, DegenerateTriple, EmptyClass, EmptyView, FormatError, InsufficientSupport,
                     NonWatertightMesh, OutOfNeighborhood, TPRecogError, UnknownClass)
from .geometry import Pose, RangeScan, apply_pose, solve_rigid_from_triple
from .hashing import GeomHashIndex, build_index, make_key, query, update_weights
from .likelihood import LikelihoodParams, log_likelihood, normalization
from .mesh import TriMesh, classify_point
from .models import ObjectModel, notched_cube, notched_half
from .relation import DensityModel, RelationConfig, delta_map, phi_score, sample_tetra, train_density
from .search import SearchConfig, generate_hypotheses, recognize, recognize_sequential, select_candidates
from .synth import ScenePlacement, SynthParams, compose_scene, sample_object_scan
from .curvature import CurvaturePair, c_score, fit_quadric

__all__ = [
    "CurvaturePair", "DegenerateFit", "DegenerateTriple", "DensityModel", "EmptyClass", "EmptyView",
    "FormatError", "GeomHashIndex", "InsufficientSupport", "LikelihoodParams", "NonWatertightMesh",
    "ObjectModel", "OutOfNeighborhood", "Pose", "RangeScan", "RelationConfig", "ScenePlacement",
    "SearchConfig", "SynthParams", "TPRecogError", "TriMesh", "UnknownClass", "apply_pose", "build_index",
    "c_score", "classify_point", "compose_scene", "delta_map", "fit_quadric", "generate_hypotheses",
    "log_likelihood", "make_key", "normalization", "notched_cube", "notched_half", "phi_score", "query",
    "recognize", "recognize_sequential", "sample_object_scan", "sample_tetra", "select_candidates",
    "solve_rigid_from_triple", "train_density", "update_weights",
]
