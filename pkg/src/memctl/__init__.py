"""Cycle-level model of a reconfigurable memory controller for FPGA accelerators.

The controller fronts DRAM with a set-associative cache for single-element
requests, a DMA engine for bulk transfers and a batch scheduler that reorders
misses by DRAM row.
"""

from .config import ControllerConfig, DramTimingConfig, load_config, render_config, validate
from .controller import Controller, SimResult, consistency_order, simulate
from .request import AccessClass, MemRequest, Op
from .workloads import Trace, gen_cnn, gen_gcn, gen_random, gen_sequential

__all__ = [
    "AccessClass", "Controller", "ControllerConfig", "DramTimingConfig", "MemRequest", "Op",
    "SimResult", "Trace", "consistency_order", "gen_cnn", "gen_gcn", "gen_random", "gen_sequential",
    "load_config", "render_config", "simulate", "validate",
]
