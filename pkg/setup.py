"""Python package description."""
from setuptools import setup, find_packages

setup(
    name="doalab",
    version="0.1.0",
    description="Multi-source direction of arrival estimation with source-splitting networks, "
    "subspace baselines and DOA driven MVDR separation",
    license="MIT",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Multimedia :: Sound/Audio :: Analysis",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
    python_requires=">=3.11",
    packages=find_packages(exclude=["test.*", "test"]),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "pyyaml>=6.0",
        "librosa>=0.10",
        "soundfile>=0.12",
        "torch>=2.0",
    ],
    entry_points={"console_scripts": ["doalab=doalab.cli:main"]},
    keywords="direction of arrival microphone array MUSIC TOPS MVDR beamforming source splitting",
    zip_safe=False,
    extras_require={"testing": ["pytest"]},
)
