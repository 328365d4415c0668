"""Transferred control barrier functions: a safety filter for a quadrotor
built from barriers designed on a double-integrator abstraction."""

from .abstraction import AbstractState, ExpCbfParams, Obstacle
from .margin import MarginFunction, closed_form_linear_r, integrate_comparison_ode
from .quadrotor import ConcreteState, QuadParams, WrenchInput
from .simfn import InterfaceGains, SimulationCertificate, build_certificate
from .tcbf import TransferredBarrier

__version__ = "0.1.0"

__all__ = [
    "AbstractState", "ExpCbfParams", "Obstacle",
    "MarginFunction", "closed_form_linear_r", "integrate_comparison_ode",
    "ConcreteState", "QuadParams", "WrenchInput",
    "InterfaceGains", "SimulationCertificate", "build_certificate",
    "TransferredBarrier",
]
