import setuptools
from ptbrpuf._version import __version__

with open("README.md", "r") as fh:
    long_description = fh.read()


setuptools.setup(
    name="ptbrpuf",
    version=__version__,
    description="Bistable ring PUF simulation and machine-learning modeling workbench.",
    author="Penterep",
    author_email="info@penterep.com",
    url="https://www.penterep.com/",
    license="GPLv3",
    packages=setuptools.find_packages(exclude=["tests", "tests.*"]),
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: Implementation :: CPython",
        "Environment :: Console",
        "Topic :: Security :: Cryptography",
        "Topic :: Scientific/Engineering",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)"
    ],
    python_requires='>=3.10',
    install_requires=["ptlibs>=1.0.32,<2", "numpy>=1.26", "scipy>=1.11", "numba>=0.59"],
    extras_require={"test": ["pytest>=8"]},
    entry_points = {'console_scripts': ['ptbrpuf = ptbrpuf.ptbrpuf:main']},
    include_package_data= True,
    long_description=long_description,
    long_description_content_type="text/markdown",
)
