# dynkin-tools packaging

import os
import sys
import pathlib

from setuptools import setup, find_packages
from setuptools.command.install import install

import dynkin_tools

HERE = pathlib.Path(__file__).parent
README = (HERE / "README.md").read_text()

SCRIPTS = [
    "dynkin-game",
]
VERSION = dynkin_tools.__version__

requirements = HERE / "requirements.txt"
with requirements.open() as f:
    lines = [req.strip() for req in f.read().split("# Testing")[0].splitlines()]
    reqs = [req for req in lines if req and not req.startswith("#")]


class VerifyVersionCommand(install):
    """Custom command to verify that the git tag matches our version"""

    description = "verify that the git tag matches our version"

    def run(self) -> None:
        tag = os.getenv("CIRCLE_TAG")
        if not tag:
            sys.exit("Env var $CIRCLE_TAG is not defined - are we running a CircleCI build?")

        if tag.startswith("v"):  # If tag is v1.2.3 make it 1.2.3
            tag = tag[1:]

        if tag != VERSION:
            info = f"Git tag: {tag} does not match the version of this app: {VERSION}"
            sys.exit(info)


def console_scripts() -> list:
    # All script entries must be in this format:
    # "dynkin-game = dynkin_tools.dynkin_cli:main"
    return [f"{script} = dynkin_tools.{script.split('-')[0]}_cli:main" for script in SCRIPTS]


setup(
    name="dynkin-tools",
    version=VERSION,
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    entry_points={
        "console_scripts": console_scripts(),
    },
    python_requires=">=3.8",
    install_requires=reqs,
    extras_require={
        "test": ["pytest", "hypothesis"],
    },
    package_data={
        "": ["*.txt", "*.md", "LICENSE"],
    },
    description="Solver for zero-sum Dynkin stopping games on finite event trees: " + " ".join(SCRIPTS),
    long_description=README,
    long_description_content_type="text/markdown",
    license="Apache License 2.0",
    keywords="dynkin game optimal stopping snell envelope " + " ".join(SCRIPTS),
    classifiers=[
        "Environment :: Console",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: Apache Software License",
        "Development Status :: 4 - Beta",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    cmdclass={
        "verify": VerifyVersionCommand,
    },
)
