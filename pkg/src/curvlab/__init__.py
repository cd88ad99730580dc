"""Conformal metrics with prescribed Gaussian and geodesic curvature on a
flat torus with a disk removed: discrete energy, Newton and mountain-pass
solvers, blow-up sweeps and half-plane bubble analytics."""

from .mesh import (
    BackgroundCurvature,
    DegenerateTriangleError,
    Mesh,
    MeshError,
    Operators,
    assemble_operators,
    background_curvature,
    build_torus_with_hole,
    read_mesh,
    validate_mesh,
    write_mesh,
)
from .model import CurvatureData, Divergence, EnergyModel, constant_prescription, make_prescription
from .solve import CriticalPoint, NoConvergence, SpectralCertificate, min_eigen, newton, solve_base, solve_minimizer_pair
from .mpass import (
    TestFunctionSpec,
    build_test_function,
    find_far_endpoint,
    level_monotonicity_scan,
    mountain_pass,
)
from .blowup import SweepSchedule, count_blowup_points, fit_bubble, rescale_profile, sweep
from .liouville import (
    HalfPlaneProfile,
    Verdict,
    bubble_closed_form,
    halfplane_masses,
    nonexistence_certificate,
    pohozaev_residual,
)

__version__ = "0.1.0"
