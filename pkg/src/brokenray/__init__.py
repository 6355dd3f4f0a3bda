"""Reconstruction of moving reflecting obstacles from broken-ray travel times.

A broken ray runs from a transmitter to the obstacle boundary and on to a
receiver; its measured travel time, endpoints and launch angles, together
with the known speed-of-sound field, pin down the reflection point. Phase 1
enumerates candidate points by travel-time matching of traced rays; phase 2
keeps only points reconstructed by enough distinct transmitter/receiver
pairs. A forward simulator provides synthetic measurements and ground truth.
"""

from .angles import AngleGrid, full_sphere
from .consensus import (FilterConfig, SupportCluster, cluster_and_count,
                        cluster_and_count_hashed, filter_by_support)
from .errors import (BrokenRayError, DanglingCandidate, EmptyPeriod, MeasurementError,
                     NonPositiveSpeed, OutsideMesh, ParseError, PolarSingularity,
                     SchemaMismatch, StaleCache, StepUnderflow, UnknownPeriod)
from .geometry import (AffineXYField, BallDomain, BoxDomain, ConstantField, Domain,
                       GridField, SpeedField, as_point, load_grid_field)
from .raytrace import (RayPath, RayState, StepControl, adaptive_step, march_batch,
                       ray_derivatives, rk4_step, trace_ray, verify_time_consistency)
from .reconstruct import (CandidateSolution, ReconstructionConfig, find_candidates,
                          reconstruct_all, refine_angles)
from .regions import (MeshSpec, RTRecord, RegionTable, adjacent_regions, build_cache,
                      load_cache, lookup_candidates, optimized_find_candidates,
                      region_index_product, region_of, save_cache,
                      seeded_find_candidates)
from .simulate import (DataPoint, Obstacle, SamplingPeriod, TruthMeta,
                       first_obstacle_hit, generate_bistatic_data, generate_retro_data,
                       obstacle_signed_distance, sampling_delta)

__version__ = "0.1.0"
