from decoh.cli import main

raise SystemExit(main())
