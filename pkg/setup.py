#
# Copyright (C) 2019 James Parkhurst
#
# This code is distributed under the BSD license.
#
from setuptools import setup, find_packages


def main():
    """
    Setup the package

    """
    tests_require = ["pytest", "pytest-cov"]

    setup(
        package_dir={"": "src"},
        packages=find_packages(where="src"),
        setup_requires=["setuptools_scm", "pytest-runner"],
        install_requires=[
            "distributed",
            "nltk",
            "numpy",
            "pandas",
            "pydantic>=2",
            "pyyaml",
            "scipy",
        ],
        tests_require=tests_require,
        test_suite="tests",
        use_scm_version={
            "write_to": "src/coca3d/_version.py",
            "fallback_version": "0.1.0",
        },
        entry_points={
            "console_scripts": [
                "coca3d=coca3d.command_line:main",
                "coca3d.run=coca3d.command_line:run",
                "coca3d.datagen=coca3d.command_line:datagen",
                "coca3d.train=coca3d.command_line:train",
                "coca3d.caption=coca3d.command_line:caption",
                "coca3d.retrieve=coca3d.command_line:retrieve",
                "coca3d.eval=coca3d.command_line:evaluate",
                "coca3d.gradcheck=coca3d.command_line:gradcheck",
                "coca3d.ablate=coca3d.command_line:ablate",
                "coca3d.config.show=coca3d.command_line.config:show",
                "coca3d.config.new=coca3d.command_line.config:new",
                "coca3d.config.edit=coca3d.command_line.config:edit",
            ]
        },
        extras_require={
            "build_sphinx": ["sphinx", "sphinx_rtd_theme", "sphinx-argparse"],
            "test": tests_require,
        },
        include_package_data=True,
    )


if __name__ == "__main__":
    main()
