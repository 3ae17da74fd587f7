#!/usr/bin/env python
# -*- coding: utf-8 -*-

import sys

from setuptools import setup

sys.path.insert(0, "gridfill")
from version import __version__


long_description = \
    """
gridfill estimates the full electrical state of a radial distribution
network from a small number of measurements. The state is arranged as a
low-rank matrix and completed by nuclear-norm minimization, with the
power-flow equations added as linear equality constraints. The package
also measures how much of the low-rank tangent space those constraints
cover, which predicts how many measurements recovery needs.
"""

with open('requirements.txt') as f:
    install_reqs = f.read().splitlines()

setup(
    name='gridfill',
    version=__version__,
    license='MIT',
    packages=[
        'gridfill',
        ],
    include_package_data=True,
    description='Constrained low-rank state estimation for distribution networks',
    long_description=long_description,
    long_description_content_type="text/markdown",
    package_data={'': ['README.md', 'LICENSE'],
                  'gridfill': ['tests/data/*']},
    install_requires=install_reqs,
    entry_points={'console_scripts': ['gridfill = gridfill.cli:main']},
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Topic :: Scientific/Engineering',
        ],
    python_requires='>=3.8',
    )
