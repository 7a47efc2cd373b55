"""The setup script for installing the package."""
from setuptools import setup, find_packages


# read the contents of the README
with open('README.md') as README_md:
    README = README_md.read()


setup(
    name='ahm_ood',
    version='0.1.0',
    description='Out-of-distribution detection for document classifiers with attention head masking',
    long_description=README,
    long_description_content_type='text/markdown',
    keywords=' '.join([
        'Out-of-Distribution-Detection',
        'Transformer',
        'Attention-Heads',
        'Document-Classification',
        'Mahalanobis',
    ]),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3 :: Only',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    packages=find_packages(exclude=['tests', '*.tests', '*.tests.*']),
    python_requires='>=3.8',
    install_requires=[
        'numpy>=1.21.0',
        'scipy>=1.7.0',
        'scikit-learn>=1.0',
        'tqdm>=4.60',
        'PyYAML>=5.4',
    ],
    entry_points={
        'console_scripts': [
            'ahm-ood = ahm_ood._app.cli:main',
        ],
    },
)
