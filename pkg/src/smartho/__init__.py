"""Handover signalling over programmable switches: wire formats, switch
pipelines, controllers, a queueing delay model and a discrete-event
simulator comparing traditional and pre-executed handovers."""

__version__ = "0.1.0"
