#!/usr/bin/env python3
"""Setup script for hbfopt."""

from setuptools import setup, find_packages

setup(
    name="hbfopt",
    version="0.1.0",
    author="hbfopt developers",
    description="Hybrid analog/digital beamforming optimization for partially-connected mmWave MIMO-OFDM",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    python_requires=">=3.10",
    install_requires=[
        "numpy>=1.24.0",
        "pydantic>=2.0.0",
        "typer>=0.9.0",
        "rich>=13.0.0",
        "jinja2>=3.0.0",
        "toml>=0.10.0",
        "orjson>=3.0.0",
    "pymanopt>=2.0.0",
    ],
    extras_require={"dev": ["pytest>=7.0.0"]},
    include_package_data=True,
    package_data={"hbfopt": ["templates/*.j2"]},
    entry_points={
        "console_scripts": [
            "hbfopt=hbfopt.cli:app",
        ],
    },
)
