"""Backend for the spherecover toolkit."""

