from cmdp_alm.cli import main

raise SystemExit(main())
