"""
Tests for CSV input and output
"""

import numpy as np
import pandas as pd
import pytest

from core.data_io import (
    latent_frame,
    read_covariates_csv,
    read_labeled_csv,
    read_latents_csv,
    sample_frame,
    write_csv,
    write_predictions,
)
from models.simulation import SampleDraw
from utils.exceptions import DataError, ParseError, SchemaMismatch


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestReadLabeled:
    """Test cases for reading covariates with responses"""

    def test_last_column_is_response(self, tmp_path):
        """Test the default response column"""
        path = write(tmp_path, "data.csv", "a,b,target\n1,2,3\n4,5,6\n")
        table = read_labeled_csv(path)
        assert table.covariates == ["a", "b"]
        assert table.response == "target"
        np.testing.assert_array_equal(table.x, [[1.0, 2.0], [4.0, 5.0]])
        np.testing.assert_array_equal(table.y, [3.0, 6.0])

    def test_named_response(self, tmp_path):
        """Test a response column that is not last"""
        path = write(tmp_path, "data.csv", "y,x1\n1,2\n3,4\n")
        table = read_labeled_csv(path, response="y")
        assert table.covariates == ["x1"]
        np.testing.assert_array_equal(table.y, [1.0, 3.0])

    def test_non_numeric_cell(self, tmp_path):
        """Test that a bad cell is located by data row and column"""
        path = write(tmp_path, "data.csv", "x1,y\n1,2\n3,abc\n")
        with pytest.raises(ParseError) as excinfo:
            read_labeled_csv(path)
        assert excinfo.value.row == 2
        assert excinfo.value.column == "y"

    def test_non_finite_cell(self, tmp_path):
        """Test that infinite and missing values are rejected"""
        path = write(tmp_path, "data.csv", "x1,y\n1,2\ninf,3\n")
        with pytest.raises(ParseError) as excinfo:
            read_labeled_csv(path)
        assert (excinfo.value.row, excinfo.value.column) == (2, "x1")
        empty_cell = write(tmp_path, "gap.csv", "x1,y\n1,\n")
        with pytest.raises(ParseError):
            read_labeled_csv(empty_cell)

    def test_missing_response(self, tmp_path):
        """Test a response name that is not in the header"""
        path = write(tmp_path, "data.csv", "x1,x2\n1,2\n")
        with pytest.raises(SchemaMismatch):
            read_labeled_csv(path, response="y")

    def test_unreadable_files(self, tmp_path):
        """Test missing, empty and header-only files"""
        with pytest.raises(DataError):
            read_labeled_csv(tmp_path / "missing.csv")
        with pytest.raises(ParseError):
            read_labeled_csv(write(tmp_path, "empty.csv", ""))
        with pytest.raises(ParseError):
            read_labeled_csv(write(tmp_path, "header.csv", "x1,y\n"))


class TestReadCovariates:
    """Test cases for reading covariate matrices"""

    def test_strict_header(self, tmp_path):
        """Test that strict reading requires the exact header"""
        path = write(tmp_path, "x.csv", "x2,x1\n1,2\n")
        with pytest.raises(SchemaMismatch):
            read_covariates_csv(path, ["x1", "x2"])

    def test_selects_named_columns(self, tmp_path):
        """Test non-strict selection and reordering"""
        path = write(tmp_path, "x.csv", "x2,id,x1\n1,7,2\n3,8,4\n")
        x = read_covariates_csv(path, ["x1", "x2"], strict=False)
        np.testing.assert_array_equal(x, [[2.0, 1.0], [4.0, 3.0]])
        with pytest.raises(SchemaMismatch):
            read_covariates_csv(path, ["x1", "x3"], strict=False)

    def test_all_columns(self, tmp_path):
        """Test reading without expected names"""
        path = write(tmp_path, "x.csv", "u,v\n1.5,-2\n")
        np.testing.assert_array_equal(read_covariates_csv(path), [[1.5, -2.0]])


class TestWriting:
    """Test cases for writing tables"""

    def test_full_precision(self, tmp_path, rng):
        """Test that written floats read back exactly"""
        values = rng.normal(size=(20, 2)) * 10.0 ** rng.integers(-8, 8, size=(20, 1))
        path = tmp_path / "out.csv"
        write_csv(pd.DataFrame(values, columns=["a", "b"]), path)
        np.testing.assert_array_equal(read_covariates_csv(path, ["a", "b"]), values)

    def test_predictions(self, tmp_path):
        """Test the prediction file layout"""
        path = tmp_path / "pred.csv"
        write_predictions(np.array([0.5, 0.25]), path)
        assert path.read_text() == "yhat\n0.5\n0.25\n"

    def test_sample_and_latents(self, tmp_path):
        """Test simulated sample tables"""
        draw = SampleDraw(
            x=np.array([[1.0, 2.0], [3.0, 4.0]]),
            y=np.array([0.5, 1.5]),
            z=np.array([0, 1]),
            tilde_z=np.array([1, 1]),
        )
        frame = sample_frame(draw)
        assert list(frame.columns) == ["x1", "x2", "y"]
        assert list(sample_frame(draw, with_response=False).columns) == ["x1", "x2"]
        path = tmp_path / "latents.csv"
        write_csv(latent_frame(draw), path)
        latents = read_latents_csv(path)
        assert latents["z"].tolist() == [0, 1]
        assert latents["tilde_z"].tolist() == [1, 1]
        with pytest.raises(SchemaMismatch):
            read_latents_csv(write(tmp_path, "bad.csv", "z\n1\n"))
