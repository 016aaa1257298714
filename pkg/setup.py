import re
from pathlib import Path

from setuptools import setup

packages = [
    'pidflow',
]

extras_require = {
    'docs': [
        'sphinx>=4.4.0',
        'typing-extensions',
    ],
    'tests': [
        'pytest>=7.0',
    ],
}

setup(
    name='pidflow',
    author='VarMonke & sudosnok',
    version=re.search(r'\d+[.]\d+[.]\d+', (Path('pidflow') / '__init__.py').read_text())[0],
    packages=packages,
    license='MIT',
    description='Simulator for PID-type continuous-time distributed optimization over graphs',
    long_description=Path('README.rst').read_text(),
    install_requires=Path('requirements.txt').read_text().splitlines(),
    extras_require=extras_require,
    entry_points={'console_scripts': ['pidflow = pidflow.cli:main']},
    python_requires='>=3.8.0',
)
