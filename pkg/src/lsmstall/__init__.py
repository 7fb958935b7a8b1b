"""Virtual-time simulator for write stalls in LSM-tree merge pipelines."""

__version__ = "0.1.0"
