"""twinstack: a self-contained edge/cloud digital-twin runtime and benchmark harness.

Edge nodes mirror physical devices, reduce rolling measurement windows before
publishing, and react to triggers; a broker routes sensor streams, heartbeats
and point-to-point actuation; the cloud node keeps virtual device mirrors,
a time-series store, alarms and a REST/SSE API; an agent executor offloads
asynchronous task graphs between peers; a data generator drives HPC-style
strong-scaling workloads.
"""

__version__ = "0.1.0"
