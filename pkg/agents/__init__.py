"""Agent services of the traffic simulation."""
