"""Fused backup state machines: synthesis, fault graphs and recovery.

Given primary state machines that all consume one event stream, build a
small set of backup machines so that the joint state survives crash or
Byzantine faults, and recover the lost or corrupted states from snapshots.
"""

__version__ = "0.1.0"

from .machine import Machine, MachineError, load_machine, parse_fsm_text, parse_kiss2
from .product import BlockPartition, RcpIndex, map_states, rcp
from .faultgraph import FaultGraph, build as build_fault_graph
from .fusion import FusionSet, check_external_backup, event_decompose, gen_fusion, inc_fusion

__all__ = [
    "BlockPartition", "FaultGraph", "FusionSet", "Machine", "MachineError", "RcpIndex",
    "build_fault_graph", "check_external_backup", "event_decompose", "gen_fusion", "inc_fusion",
    "load_machine", "map_states", "parse_fsm_text", "parse_kiss2", "rcp",
]
