"""Simulation of an NV-centre spin-echo probe monitoring ion-channel activity."""

__version__ = "0.1.0"
