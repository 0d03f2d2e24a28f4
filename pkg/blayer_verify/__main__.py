from blayer_verify.cli import main

raise SystemExit(main())
