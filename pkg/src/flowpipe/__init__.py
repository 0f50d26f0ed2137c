"""flowpipe: deterministic simulator and protocol library for a pipelined,
role-separated BFT blockchain (collection, consensus, execution,
verification, sealing) with a threshold-signature random beacon."""

__version__ = "0.1.0"
