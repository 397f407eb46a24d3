from setuptools import setup, find_packages

setup(name="lolguard",
      version="1.0.0",
      description="Per-binary token classifiers for living-off-the-land command lines",
      license="GPLv3",
      packages=find_packages(exclude=['tests']),
      package_data={'lolguard': ['data/*.jsonl'], 'lolguard.lexers': ['keywords/*.toml']},
      dependency_links=[],
      python_requires='>=3.11',
      install_requires=['numpy', 'scipy'],
      extras_require={'test': ['pytest']},
      entry_points={'console_scripts': ['lolguard = lolguard.cli:main']},
      zip_safe=False,
      classifiers=["Development Status :: 4 - Beta",
                   "Topic :: Security",
                   "License :: OSI Approved :: GNU General Public License v3 "
                   "or later (GPLv3+)"],)
