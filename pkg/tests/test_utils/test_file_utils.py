import shutil
import tempfile
from pathlib import Path
from unittest import TestCase

from phonontide.utils.file_utils import (get_files_by_extension,
                                         prepare_output_dir)


class TestGetFilesByExtension(TestCase):
    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.test_file1 = self.temp_dir / "test1.csv"
        self.test_file1.touch()
        self.test_file2 = self.temp_dir / "test2.csv"
        self.test_file2.touch()
        self.test_file4 = self.temp_dir / "manifest.json"
        self.test_file4.touch()
        self.test_subdir = self.temp_dir / "subdir"
        self.test_subdir.mkdir()
        self.test_file3 = self.test_subdir / "test3.csv"
        self.test_file3.touch()

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_get_files_by_extension(self):
        files = get_files_by_extension(str(self.temp_dir), "csv")
        self.assertEqual(len(files), 2)
        self.assertIn({"name": self.test_file1.name, "path": str(self.test_file1)}, files)
        self.assertIn({"name": self.test_file2.name, "path": str(self.test_file2)}, files)

    def test_extension_with_dot(self):
        self.assertEqual(len(get_files_by_extension(self.temp_dir, ".json")), 1)

    def test_get_files_by_extension_with_subdir(self):
        files = get_files_by_extension(str(self.temp_dir), "csv", search_sub_dir=True)
        self.assertEqual(len(files), 3)
        self.assertIn({"name": self.test_file3.name, "path": str(self.test_file3)}, files)

    def test_all_files(self):
        names = [f["name"] for f in get_files_by_extension(self.temp_dir)]
        self.assertEqual(names, ["manifest.json", "test1.csv", "test2.csv"])

    def test_get_files_by_extension_invalid_dir(self):
        with self.assertRaises(ValueError):
            get_files_by_extension("invalid_dir", "csv")

    def test_get_files_by_extension_empty_extension(self):
        with self.assertRaises(ValueError):
            get_files_by_extension(str(self.temp_dir), "")


class TestPrepareOutputDir(TestCase):
    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_creates_nested_directory(self):
        path = prepare_output_dir(self.temp_dir / "a" / "b")
        self.assertTrue(path.is_dir())
        self.assertEqual(prepare_output_dir(path), path)

    def test_rejects_file(self):
        file_path = self.temp_dir / "file.txt"
        file_path.touch()

        with self.assertRaises(ValueError):
            prepare_output_dir(file_path)
