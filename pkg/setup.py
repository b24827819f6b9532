"""
Setup script for noisy-moe
"""

from setuptools import setup, find_packages
import os

readme_path = os.path.join(os.path.dirname(__file__), "README.md")
try:
    with open(readme_path, "r", encoding="utf-8") as fh:
        long_description = fh.read()
except FileNotFoundError:
    long_description = "Semi-supervised noisy mixture of experts"

# Runtime requirements only; the development block is for local installs
requirements_path = os.path.join(os.path.dirname(__file__), "requirements.txt")
try:
    with open(requirements_path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("# Development dependencies")[0].splitlines()
        requirements = [
            line.strip() for line in lines if line.strip() and not line.startswith("#")
        ]
except FileNotFoundError:
    requirements = [
        "numpy>=1.23",
        "scipy>=1.9",
        "pandas>=1.5",
        "scikit-learn>=1.1",
        "python-dotenv>=0.19.0",
    ]

setup(
    name="noisy-moe",
    version="1.0.0",
    author="Jit Roy",
    author_email="your.email@example.com",
    description="Semi-supervised noisy mixture of experts",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["core*", "models*", "utils*"]),
    py_modules=["main"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.10",
    install_requires=requirements,
    extras_require={
        "dev": [
            "pytest>=6.0",
            "pytest-cov>=2.0",
            "black>=21.0",
            "flake8>=3.8",
            "mypy>=0.800",
            "pre-commit>=2.0",
        ],
    },
    entry_points={"console_scripts": ["noisy-moe=main:main"]},
    keywords="mixture-of-experts semi-supervised robust-regression",
)
