from egogaze.cli import main

main()
