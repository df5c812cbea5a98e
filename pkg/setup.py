from setuptools import find_packages, setup

with open('README.md', 'r') as f:
    long_description = f.read()
description = 'Digital-twin enabled hybrid channel model for THz urban macrocells'
keywords = 'thz channel-model ray-tracing foliage digital-twin'

paths = ['*.json',  # default configuration and state parameter presets
         '*.j2',  # html table template
         ]
paths = ['templates/' + p for p in paths]

setup(
    name='dtecm',
    version='0.1.1',
    description=description,
    long_description=long_description,
    long_description_content_type='text/markdown',
    author='Joseph Contreras',
    author_email='26684136+JosephJContreras@users.noreply.github.com',
    packages=find_packages(exclude=['tests', 'tests.*']),
    classifiers=['Development Status::3 - Alpha'],
    keywords=keywords,
    python_requires='>=3.8',
    install_requires=['jinja2',
                      'joblib',
                      'numpy',
                      'pandas',
                      'Pillow',
                      'scikit-learn',
                      'scipy',
                      'shapely',
                      ],
    entry_points={'console_scripts': ['dtecm=dtecm:cli']},
    package_data={'dtecm': paths,
                  '': ['License.txt']},
    include_package_data=True,
    license='MIT')
