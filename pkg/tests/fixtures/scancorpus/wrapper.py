import os

getenv = os.environ.get
value = getenv("SHELL")
print(bool(value))
