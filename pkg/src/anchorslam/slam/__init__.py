from .convergence import contraction_matrix, expected_error_contraction
from .filter import (ITERATIVE, ONE_SHOT, AnchorObservation, FilterConfig,
                     PublishedEstimate, SlamState, association_likelihoods,
                     building_update, iterative_human_update, map_update,
                     motion_update, normalize_and_resample, observe,
                     one_shot_human_update, predict, slam_step, update_weight)
from .measurement import (measurement_jacobians, predict_measurement,
                          refine_particle_position)
from .types import (AnchorEstimate, AssociationResult, ConfusionMatrix,
                    ControlInput, DegenerateGeometryError, MeasurementMode,
                    NoiseParams, Particle, Pose, SlamError, is_psd, wrap_angle)

__all__ = [
    "AnchorEstimate", "AnchorObservation", "AssociationResult", "ConfusionMatrix",
    "ControlInput", "DegenerateGeometryError", "FilterConfig", "ITERATIVE",
    "MeasurementMode", "NoiseParams", "ONE_SHOT", "Particle", "Pose",
    "PublishedEstimate", "SlamError", "SlamState", "association_likelihoods",
    "building_update", "contraction_matrix", "expected_error_contraction",
    "is_psd", "iterative_human_update", "map_update", "measurement_jacobians",
    "motion_update", "normalize_and_resample", "observe", "one_shot_human_update",
    "predict", "predict_measurement", "refine_particle_position", "slam_step",
    "update_weight", "wrap_angle",
]
