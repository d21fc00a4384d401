"""
Setup script for the concatenated dynamically corrected gate toolkit
"""

from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]

setup(
    name="concatenated-dcg",
    version="1.0.0",
    author="markcurtis1970",
    description="Synthesis and exact simulation of concatenated dynamically corrected gates on a spin bath",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=["opalg", "errmodel", "synth", "sim", "analysis", "sweep", "selftest", "config", "cli"],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "dcg=cli:cli",
        ],
    },
    include_package_data=True,
    package_data={
        "": ["configs/*.json", "configs/*.yaml", "*.md", "*.txt"],
    },
)
