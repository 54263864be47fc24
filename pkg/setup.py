"""
安装脚本
"""

from setuptools import setup, find_packages


setup(
    name="mthids",
    version="0.1.0",
    author="MTH-IDS Team",
    description="多层混合入侵检测系统 - 车载 CAN 总线与外部网络流量的签名/异常混合检测",
    long_description="多层混合入侵检测系统 - 车载 CAN 总线与外部网络流量的签名/异常混合检测",
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=("tests", "tests.*")),
    py_modules=["main"],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=[
        "click>=8.1.7",
        "pydantic>=2.5.1",
        "python-dotenv>=1.0.0",
        "rich>=13.7.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "pandas>=2.0",
        "joblib>=1.3",
    ],
    extras_require={
        "test": ["pytest>=7.4"],
    },
    entry_points={
        "console_scripts": [
            "mthids=main:main",
        ],
    },
)
