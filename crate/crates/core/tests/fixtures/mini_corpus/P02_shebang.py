#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import os

# read the config
path = os.environ.get("CFG")
