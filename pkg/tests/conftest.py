import pytest
from concurrent.futures import ProcessPoolExecutor


@pytest.fixture(scope="session")
def pool():
    with ProcessPoolExecutor(max_workers=2) as executor:
        list(executor.map(int, range(2)))  # warm the workers
        yield executor
