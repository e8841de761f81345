"""Numerical laboratory for a bouncing ball on a periodically moving wall
in constant gravity.

The library covers the event-driven collision map on the phase cylinder,
its closed-form large-velocity limit on the torus, invariant cone fields
with quantitative expansion estimates, fragmentation of unstable curves by
the singularity set, and seeded Monte Carlo experiments for the ergodic
and mixing properties of both maps.
"""

__version__ = "0.1.0"

from .collision import (CollisionState, OrbitRecord, StepOutcome, flight_time,
                        jacobian_fd, simulate_orbit, step, step_many)
from .cones import (Cone, ExpansionReport, check_cone_invariance, cone_at,
                    curvature_evolution, distortion_check,
                    expansion_constants, least_expansion_sigma,
                    monotonicity_cone_at)
from .curves import (FragmentationRecord, UnstableCurve, complexity_count,
                     count_components, evolve_curve, growth_experiment,
                     random_unstable_curve, separation_time)
from .errors import (CurveError, GrazingCollision, NoRootFound,
                     NonPositiveRelativeVelocity, NotAdmissibleError,
                     PingpongError, ProfileError, SingularCollision,
                     SingularHit)
from .limit_map import (CylinderPoint, SingularitySegment, TorusPoint,
                        distance_to_singularity, limit_step, singularity_set,
                        torus_jacobian, torus_step, torus_step_inverse)
from .stats import (Observable, StatReport, autocorrelation, birkhoff_average,
                    builtin_observables, classify_orbit, clt_experiment,
                    escape_fraction, gamma_mean, mixing_box_estimator,
                    recurrence_stats)
from .wall import (Regime, WallMotion, builtin_profile, load_profile,
                   n_profile, parse_profile, q_profile)
