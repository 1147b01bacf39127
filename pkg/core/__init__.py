"""Services, protocol and orchestration of the traffic simulation."""
