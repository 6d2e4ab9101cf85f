# Core App Package
