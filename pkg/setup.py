from setuptools import setup, find_packages

# Read the contents of your README file
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Define the package dependencies
install_requires = [
    # Numerics
    "numpy>=1.22",
    "scipy>=1.8",

    # Config and result schemas
    "pydantic>=2.0",

    # Progress bars and environment configuration
    "tqdm>=4.60.0",
    "python-dotenv>=0.19.0",
]

setup(
    name="latcount",
    version="0.1.0",
    author="latcount developers",
    author_email="author@example.com",
    description="Latent Gaussian count time series: link functions, latent autocovariance estimation and sparse VAR LASSO",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(include=["latcount_*", "latcount_*.*"], exclude=["tests*", "examples*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    install_requires=install_requires,
    extras_require={
        "dev": [
            "pytest>=6.0",
            "pytest-cov>=2.0",
            "black>=21.0",
            "flake8>=3.8",
        ],
        "all": [
            "latcount[dev]",
        ],
    },
    entry_points={
        "console_scripts": [
            "latcount=latcount_harness.cli:main",
        ],
    },
    include_package_data=True,
    zip_safe=False,
)
