import os
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import DeclarativeBase, sessionmaker

REGISTRY_FILE = "registry.sqlite"


def database_url(out_dir=None) -> str:
    # ✅ 환경변수 우선, 없으면 출력 디렉터리의 SQLite
    url = os.getenv("DATABASE_URL")
    if url:
        return url
    if out_dir is None:
        raise RuntimeError(
            "DATABASE_URL is not set and no output directory was given. "
            "Set it in your environment variables."
        )
    return f"sqlite:///{Path(out_dir).resolve() / REGISTRY_FILE}"


def make_engine(url: str):
    # ✅ SQLite인지 Postgres인지 자동 판별
    connect_args = {}
    if url.startswith("sqlite"):
        connect_args = {"check_same_thread": False}

    return create_engine(
        url,
        connect_args=connect_args,
        pool_pre_ping=True,
    )


def make_session_factory(engine):
    return sessionmaker(
        bind=engine,
        autoflush=False,
        autocommit=False,
    )


class Base(DeclarativeBase):
    pass
