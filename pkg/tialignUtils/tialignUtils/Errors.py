# MIT License
#
# Copyright (c) 2025 Hammerspace, Inc
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.
# -----------------------------------------------------------------------------
# Errors.py
#
# Exceptions raised by the tialign library. Messages start with a fixed phrase
# ("empty audio", "corrupt checkpoint", ...) so the command line and the tests
# can match on it.

from typing import Optional


class TialignError(Exception):
    pass


class InputError(TialignError, ValueError):
    '''
    Bad audio, bad sequences, or an unreadable text file. For text files the
    1-based line number is kept so the CLI can report it.
    '''

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{message} ({path}, line {line})"
        elif path is not None:
            message = f"{message} ({path})"
        super().__init__(message)


class ShapeMismatch(TialignError, ValueError):
    pass


class CheckpointError(TialignError):
    pass


class IncompatibleModel(TialignError):
    pass


class TrainingDivergence(TialignError, ArithmeticError):

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"divergence at epoch {epoch} batch {batch}")


class ConfigError(TialignError):
    pass


class AlignmentTooLarge(TialignError):
    pass
