"""Bell transfer-operator toolkit for translationally invariant spin chains."""

from .errors import (BellsweepError, CacheError, ConfigurationError,
                     ConvergenceError, DomainError, NumericError,
                     ResourceError)
from .geometry import (AXIS_LOCKED, AZIMUTHAL_MIRROR, FREE, POLAR_MIRROR,
                       BlochAngles, MeasurementSettings, SymmetryMode,
                       UnitVector, angles_to_vector, canonicalize_to_domain,
                       expand_settings, vector_to_angles)
from .models import (CLUSTER_ISING, TFIM, XXZ, FiniteGroundState, ModelSpec,
                     build_hamiltonian_dense, ground_state_ed)
from .tebd import (UniformMPS, canonical_defect, ground_state_umps,
                   mps_local_expectation)
from .bellop import (BellSiteBlock, MixedTransferMatrix, TransferSpectrum,
                     bell_value_finite, brute_force_bell_operator,
                     build_site_block, mixed_transfer_matrix,
                     transfer_spectrum)
from .optimizer import (OptimizerConfig, OptResult, grid_scan,
                        gradient_ascent, optimize_settings)
from .indicators import (GeometryReport, SweepRecord, bloch_trajectory,
                         classify_geometry, detect_critical_points,
                         susceptibility, sweep)

__version__ = "0.1.0"
