from setuptools import setup, find_packages

setup(
    name="cdlab",
    version="0.1.0",
    description="Stabilized finite-element laboratory for convection-diffusion with discrete energy diagnostics",
    packages=find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.12",
        "python-dotenv>=1.0.0",
    ],
    entry_points={
        "console_scripts": [
            "cdlab=cdlab.cli:main",
        ],
    },
    extras_require={
        "plot": ["matplotlib>=3.5"],
        "all": ["matplotlib>=3.5"],
        "dev": [
            "pytest>=7.0.0",
            "black>=22.0.0",
            "isort>=5.10.0",
            "mypy>=0.950",
        ],
    },
)
