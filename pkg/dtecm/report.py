"""
HTML tables of the CSV artifacts produced by a run.
"""

import os

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .config import load_config


class Report:
    """
    Renders one HTML page per result table

    Parameters:
        tables (:obj:`dict`): table name to CSV path or
            :obj:`pandas.DataFrame`
        config (:obj:`dict` | :obj:`None`): configuration from
            :func:`~dtecm.config.load_config`, defaults to the bundled one

    Raises:
        FileNotFoundError: When a table file does not exist
        TypeError: When a table is neither a path nor a DataFrame
    """

    def __init__(self, tables, config=None):
        self.config = config or load_config()
        self.layout = self.config["report"]
        self.paths = self.config["paths"]
        self.tables = tables
        self.env = Environment(
            trim_blocks=True,
            lstrip_blocks=True,
            loader=FileSystemLoader(os.path.dirname(self.paths["template"])),
        )
        self.env.filters["has_link"] = lambda value: isinstance(value, tuple)

    @property
    def tables(self):
        """
        Tables to be rendered, keyed by name

        The name is the file name of the written report and the key used to
        look up titles, captions and descriptions.
        """
        return self.__tables

    @tables.setter
    def tables(self, tables):
        if not isinstance(tables, dict):
            raise TypeError("tables must be a dict")
        loaded = {}
        for name, table in tables.items():
            if isinstance(table, pd.DataFrame):
                loaded[name] = table
            elif isinstance(table, str):
                if not os.path.exists(table):
                    raise FileNotFoundError(f"table '{table}' does not exist")
                loaded[name] = pd.read_csv(table)
            else:
                raise TypeError(f"table '{name}' must be a path or a DataFrame")
        self.__tables = loaded

    @property
    def names(self):
        return list(self.tables)

    def __get_title(self, name):
        return self.layout["titles"].get(name, name)

    def __get_links(self):
        return [
            (self.__get_title(n), os.path.join(".", f"{n}.html")) for n in self.names
        ]

    def __get_data(self, name):
        table = self.tables[name]
        rows = [tuple(row) for row in table.itertuples(index=False)]
        return {name: rows}

    def __render_report(self, name, data, parse=False):
        if parse:
            data = self.parse(data)
        template = self.env.get_template(os.path.basename(self.paths["template"]))
        return template.render(
            title=self.__get_title(name),
            description=self.layout["descriptions"].get(name, ""),
            caption=self.layout["captions"].get(name, ""),
            links=self.__get_links(),
            headers=list(self.tables[name].columns),
            rows=data.get(name, []),
        )

    def render(self, names=None, parse=False):
        """
        Renders html for each table in :obj:`names`

        Parameters:
            names (:obj:`list` | :obj:`str` | :obj:`None`): tables to render,
                defaults to :obj:`None`, all tables
            parse (:obj:`bool`): whether the parse function is called on
                the rows before rendering

        Returns:
            :obj:`dict`: Rendered html of reports
        """
        if isinstance(names, str):
            names = [names]
        elif names is None:
            names = self.names

        reports = {}
        for name in names:
            if name not in self.tables:
                raise ValueError(f"no table named '{name}'")
            reports[name] = self.__render_report(name, self.__get_data(name), parse)
        return reports

    def write(self, report_dir=None, **kwargs):
        """
        Write rendered reports to ``<report_dir>/<name>.html``

        Parameters:
            report_dir (:obj:`str` | :obj:`None`): output directory, defaults
                to the configured ``report_dir`` path
            kwargs: passed to :meth:`render`

        Raises:
            :obj:`NotADirectoryError`: When report path does not exist
        """
        if report_dir is None:
            report_dir = self.paths["report_dir"]
        if not os.path.isdir(report_dir):
            raise NotADirectoryError(f"{report_dir} is not a directory")

        for name, html in self.render(**kwargs).items():
            path = os.path.join(report_dir, f"{name}.html")
            with open(path, "w", encoding="utf-8") as f:
                f.write(html)

    def parse(self, data):
        """
        Hook to reformat rows before rendering

        Parameters:
            data (:obj:`dict`): table name to a list of row tuples

        Returns:
            :obj:`dict`: rows as they should be rendered. A cell may be a
            plain value or a ``(value, href)`` tuple rendered as a link.

        Raises:
            :obj:`NotImplementedError`: unless overridden by a subclass
        """
        raise NotImplementedError("parse function must be overloaded before use")
