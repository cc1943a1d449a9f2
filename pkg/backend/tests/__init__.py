"""Test package for the spherecover backend."""
