#!/usr/bin/env python

import os
import re

from setuptools import setup, find_packages

with open(os.path.join("asvlab", "__init__.py")) as f:
    version = re.search(r'^__version__ = "([^"]+)"', f.read(), re.M).group(1)

install_deps = [
    "numpy>=1.22",
    "pandas>=1.5",
    "gymnasium>=0.28",
    "psutil",
    "pyyaml",
    "toml",
]

test_deps = [
    "pytest",
    "pytest-cov",
    "pytest-env",
    "pytest-mock",
    "scipy",
]

extras = {
    "install": install_deps,
    "tests": test_deps,
}

setup(
    name="asvlab",
    version=version,
    description="Circular convolutional scan autoencoders for vessel collision avoidance agents",
    license="AGPL",
    packages=find_packages(exclude=["test"]),
    package_data={"asvlab": ["data/*.yml", "data/*.json", "locales/*.json"]},
    python_requires=">=3.9",
    install_requires=install_deps,
    tests_require=test_deps,
    extras_require=extras,
    entry_points={"console_scripts": ["asvlab = asvlab.__main__:main"]},
)
