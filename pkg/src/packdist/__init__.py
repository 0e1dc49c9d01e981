"""Finite-scale packing-dimension experiments for digit sets, distance sets and projections."""

__version__ = "0.1.0"

from .covering import (CoveringProfile, DimensionEstimate, PointCloud, ProfileEntry, dimension_slope,
                       grid_covering_count, grid_profile, qadic_scales)
from .digitsets import (BlockSchedule, DigitFractal, density_profile, enumerate_points, exact_covering_count,
                        random_dust, sample_points, schedule_for_density, validate_digits)
from .distance import (DigitEnvelope, DistanceCloud, certify_envelope, digit_envelope, distance_set,
                       exact_distance_profile, pinned_distance_set, pinned_slope_check, sharpness_check,
                       verify_envelope)
from .norms import (ConeSpec, LpNorm, PolyhedralNorm, cone_contains, cone_X_contains, direction_aperture,
                    direction_constant, duality_check, euclidean, gradient, hexagonal, linf, load_norm, lp,
                    modulus_h, transversality_volume)
from .projections import (FiberCoverReport, ProjectionFamily, coordinate_project, fiber_cover, jarvenpaa_check,
                          projection_identity_check, weak_transversality_scan)

__all__ = [name for name in dir() if not name.startswith("_")]
