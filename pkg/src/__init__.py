"""lindblad-forge: Lindblad master equations built from microscopic system-bath models."""
