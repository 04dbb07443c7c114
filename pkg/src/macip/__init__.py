"""macip: a desk-scale smart-city telemetry platform.

Simulated sensor fleet -> binary LPWAN uplink -> edge gateway filtering ->
persistent time-series core -> LSTM energy forecasting -> street-light
control -> rule-based alerting -> operator portal (HTTP API + SSE + web UI).
"""

__version__ = "0.1.0"
