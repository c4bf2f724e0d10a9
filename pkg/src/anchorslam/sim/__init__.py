from .agents import AgentTruth, advance_agents, spawn_agents
from .environment import Environment, generate_environment
from .events import (detect_building_anchor_event, detect_encounters,
                     encounter_candidates, select_partners)
from .radio import (BluetoothChannel, Calibration, calibrate, synthesize_bluetooth_rss,
                    synthesize_wifi_scan, wifi_rss_matrix)
from .runner import EventLog, SimResult, SimulationError, run_simulation

__all__ = [
    "AgentTruth", "BluetoothChannel", "Calibration", "Environment", "EventLog", "SimResult",
    "SimulationError", "advance_agents", "calibrate", "detect_building_anchor_event",
    "detect_encounters", "encounter_candidates", "generate_environment", "run_simulation",
    "select_partners", "spawn_agents", "synthesize_bluetooth_rss", "synthesize_wifi_scan",
    "wifi_rss_matrix",
]
