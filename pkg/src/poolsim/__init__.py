"""poolsim: agent-based urban ride-hailing simulator with capacity-2 pooling."""

from .demand import ElasticityTable, Order, ServiceChoice
from .engine import RunResult, SimConfig, Simulation, TripRecord, run_simulation
from .matching import AssignmentSolution, CandidateTrip, Stop, VehicleState
from .metrics import EmissionModel, SystemMetrics, ZoneGrid
from .netgraph import PathResult, RoadNetwork, load_network
from .pricing import PricingParams, share_fare, solo_fare

__version__ = "0.1.0"

__all__ = [
    "AssignmentSolution", "CandidateTrip", "ElasticityTable", "EmissionModel",
    "Order", "PathResult", "PricingParams", "RoadNetwork", "RunResult",
    "ServiceChoice", "SimConfig", "Simulation", "Stop", "SystemMetrics",
    "TripRecord", "VehicleState", "ZoneGrid", "load_network",
    "run_simulation", "share_fare", "solo_fare",
]
