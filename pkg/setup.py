from setuptools import find_packages, setup

setup(
    name="bellforge",
    version="1.0.0",
    packages=find_packages(exclude=["tests"]),
    python_requires=">=3.8",
    install_requires=[
        "rich>=12.0.0",
        "numpy>=1.20.0",
        "scipy>=1.6.0",
    ],
    extras_require={
        "test": [
            "pytest>=6.2.0",
            "hypothesis>=6.0.0",
        ],
    },
    entry_points={
        "console_scripts": [
            "bellforge=bellforge.cli:main",
        ],
    },
)
