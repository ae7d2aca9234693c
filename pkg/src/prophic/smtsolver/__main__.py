import sys

from .engine import Server


def main():
    sys.setrecursionlimit(100000)
    Server(sys.stdout).run(sys.stdin)


if __name__ == "__main__":
    main()
