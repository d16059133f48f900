"""Two-layer active-inference energy management: a continuous agent per building
thermal zone and a discrete expected-free-energy planner for the community."""

__version__ = "0.1.0"
