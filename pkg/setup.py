from setuptools import setup, find_packages

setup(
    name="mlcs-sar",
    version="0.1.0",
    description="Multilook compressed-sensing SAR imaging with speckle reduction",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "pydantic>=2",
        "PyYAML",
        "python-dotenv",
        "Pillow",
    ],
    extras_require={
        "dev": [
            "pytest",
            "pytest-cov",
            "hypothesis",
            "black",
            "flake8",
            "isort",
        ],
    },
    entry_points={
        "console_scripts": [
            "mlcs-sar=mlcs_sar.cli:main",
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering",
    ],
    python_requires=">=3.9",
)
