"""Almost-rigid bodies: simulation on the rotation group with time-varying
inertia, relative equilibria, stability certificates, and empirical probes."""

__version__ = "0.1.0"

from .dynamics import (BodyState, InertiaSchedule, Trajectory,
                       conservation_report, euler_field, flow, hamiltonian,
                       inertia_at, inertia_rate_at, momentum_map, reduce,
                       reduced_distance, sphere_chart, trajectory_to_csv)
from .equilibria import (RelativeEquilibrium, find_common_axes,
                         foliated_structure_check, h_xi, make_equilibrium,
                         orbit_reconstruction_check, verify_relative_equilibrium)
from .numerics import (NumericsError, TimeWindow, fd_gradient, fd_hessian,
                       rk4_step, rkmk4_attitude_step, sym_eigen,
                       third_derivative_bound)
from .stability import (CertificateMargins, certify, chart_invariance_check,
                        dt_condition, equivariance_identity_check,
                        lpdf_and_decrescent_check, mdot_along_flow,
                        probe_stability, reduced_chart_hessian, restricted_form,
                        second_variation, second_variation_fd_oracle)

__all__ = [
    "__version__",
    "BodyState", "InertiaSchedule", "Trajectory", "conservation_report",
    "euler_field", "flow", "hamiltonian", "inertia_at", "inertia_rate_at",
    "momentum_map", "reduce", "reduced_distance", "sphere_chart",
    "trajectory_to_csv",
    "RelativeEquilibrium", "find_common_axes", "foliated_structure_check",
    "h_xi", "make_equilibrium", "orbit_reconstruction_check",
    "verify_relative_equilibrium",
    "NumericsError", "TimeWindow", "fd_gradient", "fd_hessian", "rk4_step",
    "rkmk4_attitude_step", "sym_eigen", "third_derivative_bound",
    "CertificateMargins", "certify", "chart_invariance_check", "dt_condition",
    "equivariance_identity_check", "lpdf_and_decrescent_check",
    "mdot_along_flow", "probe_stability", "reduced_chart_hessian",
    "restricted_form", "second_variation", "second_variation_fd_oracle",
]
