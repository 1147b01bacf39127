from setuptools import find_packages, setup

with open("requirements.txt", encoding="utf-8") as f:
    requirements = [
        line.strip() for line in f
        if line.strip() and not line.startswith("#")
        and not line.startswith(("pytest", "black", "flake8", "mypy", "isort"))
    ]

setup(
    name="commuter-traffic-sim",
    version="1.0.0",
    description="Microservice traffic simulation of commuting driver agents",
    packages=find_packages(exclude=("tests",)),
    py_modules=["main"],
    install_requires=requirements,
    python_requires=">=3.9",
    entry_points={"console_scripts": ["sim=main:main"]},
)
