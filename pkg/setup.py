from setuptools import setup, find_packages

setup(
    name="forwardtest",
    version="0.1.0",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    install_requires=[
        "numpy>=1.22.0",
        "pandas>=1.5.0",
        "scipy>=1.9.0",
        "matplotlib>=3.6.0",
        "requests>=2.28.0",
        "markdown>=3.4.1",
    ],
    extras_require={
        "test": ["pytest>=7.4.0", "hypothesis>=6.70.0"],
    },
    entry_points={
        "console_scripts": ["forwardtest=forwardtest.cli:main"],
    },
    python_requires=">=3.8",
)
