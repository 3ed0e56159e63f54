"""Discrete-event simulator of the CPU and accelerator queueing network."""
from edgesim.sim.engine import SimApp, SimReport, SimScenario, Simulation, simulate
from edgesim.sim.stations import Batched, FcfsNonPreemptive, MultiServerPs, TimeShared

__all__ = [
    "Batched",
    "FcfsNonPreemptive",
    "MultiServerPs",
    "SimApp",
    "SimReport",
    "SimScenario",
    "Simulation",
    "TimeShared",
    "simulate",
]
